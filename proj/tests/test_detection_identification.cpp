#include "cids/detection.hpp"
#include "cids/identification.hpp"
#include <doctest.h>
