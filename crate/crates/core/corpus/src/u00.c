#include "corpus.h"

uint32_t unit_00(uint32_t seed)
{
    uint32_t acc = seed + 0u;
    for (int j = 0; j < 10; j++)
        acc = mix32(acc + (uint32_t)j * 1u);
    return acc;
}
