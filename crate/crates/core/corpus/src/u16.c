#include "corpus.h"

uint32_t unit_16(uint32_t seed)
{
    uint32_t acc = seed + 16u;
    for (int j = 0; j < 26; j++)
        acc = mix32(acc + (uint32_t)j * 33u);
    return acc;
}
