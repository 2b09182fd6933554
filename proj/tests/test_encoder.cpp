#include "cids/encoder.hpp"
#include "cids/checkpoint.hpp"
#include <doctest.h>
