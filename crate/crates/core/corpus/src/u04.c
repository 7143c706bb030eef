#include "corpus.h"

uint32_t unit_04(uint32_t seed)
{
    uint32_t acc = seed + 4u;
    for (int j = 0; j < 14; j++)
        acc = mix32(acc + (uint32_t)j * 9u);
    return acc;
}
