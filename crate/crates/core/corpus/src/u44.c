#include "corpus.h"

uint32_t unit_44(uint32_t seed)
{
    uint32_t acc = seed + 44u;
    for (int j = 0; j < 54; j++)
        acc = mix32(acc + (uint32_t)j * 89u);
    return acc;
}
