#pragma once

#include "emmp/error.hpp"
#include "emmp/numeric.hpp"
#include "emmp/graph.hpp"
#include "emmp/sum_product.hpp"
#include "emmp/em.hpp"
#include "emmp/oracle.hpp"
#include "emmp/models.hpp"
#include "emmp/io.hpp"
#include "emmp/cli.hpp"
