#include "cids/config.hpp"
#include <doctest.h>
