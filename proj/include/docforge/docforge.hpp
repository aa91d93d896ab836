#pragma once

// Everything in one include.

#include "augment.hpp"
#include "common.hpp"
#include "composer.hpp"
#include "dataset.hpp"
#include "doc_model.hpp"
#include "elements.hpp"
#include "inspect.hpp"
#include "layout.hpp"
#include "metrics.hpp"
#include "page.hpp"
#include "parallel.hpp"
#include "png_io.hpp"
#include "raster.hpp"
#include "raster_layout.hpp"
