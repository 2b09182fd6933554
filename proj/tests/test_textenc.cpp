#include "cids/textenc.hpp"
#include <doctest.h>
