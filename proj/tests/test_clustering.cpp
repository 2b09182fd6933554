#include "cids/clustering.hpp"
#include <doctest.h>
