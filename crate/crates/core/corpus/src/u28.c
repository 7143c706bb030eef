#include "corpus.h"

uint32_t unit_28(uint32_t seed)
{
    uint32_t acc = seed + 28u;
    for (int j = 0; j < 38; j++)
        acc = mix32(acc + (uint32_t)j * 57u);
    return acc;
}
