#include <doctest.h>
TEST_SUITE_BEGIN("rays");
TEST_SUITE_END();
