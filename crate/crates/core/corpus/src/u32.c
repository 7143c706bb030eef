#include "corpus.h"

uint32_t unit_32(uint32_t seed)
{
    uint32_t acc = seed + 32u;
    for (int j = 0; j < 42; j++)
        acc = mix32(acc + (uint32_t)j * 65u);
    return acc;
}
