#include "corpus.h"

uint32_t unit_08(uint32_t seed)
{
    uint32_t acc = seed + 8u;
    for (int j = 0; j < 18; j++)
        acc = mix32(acc + (uint32_t)j * 17u);
    return acc;
}
