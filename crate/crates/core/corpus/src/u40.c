#include "corpus.h"

uint32_t unit_40(uint32_t seed)
{
    uint32_t acc = seed + 40u;
    for (int j = 0; j < 50; j++)
        acc = mix32(acc + (uint32_t)j * 81u);
    return acc;
}
