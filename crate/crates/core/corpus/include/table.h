#ifndef TABLE_H
#define TABLE_H

#define TABLE_LEN 16
#define TABLE_INIT { 3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8, 9, 7, 9, 3 }

#endif
