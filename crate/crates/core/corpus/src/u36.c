#include "corpus.h"

uint32_t unit_36(uint32_t seed)
{
    uint32_t acc = seed + 36u;
    for (int j = 0; j < 46; j++)
        acc = mix32(acc + (uint32_t)j * 73u);
    return acc;
}
