#ifndef CORPUS_H
#define CORPUS_H

#include <stdint.h>

#define CORPUS_UNITS 48

static inline uint32_t mix32(uint32_t x)
{
    x ^= x >> 16;
    x *= 0x7feb352dU;
    x ^= x >> 15;
    x *= 0x846ca68bU;
    x ^= x >> 16;
    return x;
}

uint32_t unit_00(uint32_t seed);
uint32_t unit_01(uint32_t seed);
uint32_t unit_02(uint32_t seed);
uint32_t unit_03(uint32_t seed);
uint32_t unit_04(uint32_t seed);
uint32_t unit_05(uint32_t seed);
uint32_t unit_06(uint32_t seed);
uint32_t unit_07(uint32_t seed);
uint32_t unit_08(uint32_t seed);
uint32_t unit_09(uint32_t seed);
uint32_t unit_10(uint32_t seed);
uint32_t unit_11(uint32_t seed);
uint32_t unit_12(uint32_t seed);
uint32_t unit_13(uint32_t seed);
uint32_t unit_14(uint32_t seed);
uint32_t unit_15(uint32_t seed);
uint32_t unit_16(uint32_t seed);
uint32_t unit_17(uint32_t seed);
uint32_t unit_18(uint32_t seed);
uint32_t unit_19(uint32_t seed);
uint32_t unit_20(uint32_t seed);
uint32_t unit_21(uint32_t seed);
uint32_t unit_22(uint32_t seed);
uint32_t unit_23(uint32_t seed);
uint32_t unit_24(uint32_t seed);
uint32_t unit_25(uint32_t seed);
uint32_t unit_26(uint32_t seed);
uint32_t unit_27(uint32_t seed);
uint32_t unit_28(uint32_t seed);
uint32_t unit_29(uint32_t seed);
uint32_t unit_30(uint32_t seed);
uint32_t unit_31(uint32_t seed);
uint32_t unit_32(uint32_t seed);
uint32_t unit_33(uint32_t seed);
uint32_t unit_34(uint32_t seed);
uint32_t unit_35(uint32_t seed);
uint32_t unit_36(uint32_t seed);
uint32_t unit_37(uint32_t seed);
uint32_t unit_38(uint32_t seed);
uint32_t unit_39(uint32_t seed);
uint32_t unit_40(uint32_t seed);
uint32_t unit_41(uint32_t seed);
uint32_t unit_42(uint32_t seed);
uint32_t unit_43(uint32_t seed);
uint32_t unit_44(uint32_t seed);
uint32_t unit_45(uint32_t seed);
uint32_t unit_46(uint32_t seed);
uint32_t unit_47(uint32_t seed);

#endif
