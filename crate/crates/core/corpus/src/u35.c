#include "corpus.h"
#include <string.h>

static const char where[] = __FILE__;

uint32_t unit_35(uint32_t seed)
{
    uint32_t acc = seed;
    for (size_t j = 0; j < strlen(where); j++)
        acc = mix32(acc ^ (uint32_t)(unsigned char)where[j]);
    return acc + 35u;
}
