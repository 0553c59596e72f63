#include <doctest.h>
TEST_SUITE_BEGIN("scene");
TEST_SUITE_END();
