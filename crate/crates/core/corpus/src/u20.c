#include "corpus.h"

uint32_t unit_20(uint32_t seed)
{
    uint32_t acc = seed + 20u;
    for (int j = 0; j < 30; j++)
        acc = mix32(acc + (uint32_t)j * 41u);
    return acc;
}
