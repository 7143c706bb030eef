#include "corpus.h"

uint32_t unit_12(uint32_t seed)
{
    uint32_t acc = seed + 12u;
    for (int j = 0; j < 22; j++)
        acc = mix32(acc + (uint32_t)j * 25u);
    return acc;
}
