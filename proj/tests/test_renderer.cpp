#include <doctest.h>
TEST_SUITE_BEGIN("renderer");
TEST_SUITE_END();
