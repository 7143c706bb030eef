#include "corpus.h"

uint32_t unit_24(uint32_t seed)
{
    uint32_t acc = seed + 24u;
    for (int j = 0; j < 34; j++)
        acc = mix32(acc + (uint32_t)j * 49u);
    return acc;
}
