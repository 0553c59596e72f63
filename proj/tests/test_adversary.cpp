#include <doctest.h>
TEST_SUITE_BEGIN("adversary");
TEST_SUITE_END();
