#include "cids/pipeline.hpp"
#include <doctest.h>
