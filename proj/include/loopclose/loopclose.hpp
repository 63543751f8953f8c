#pragma once

// Umbrella header for the loop closure engine.

#include "loopclose/alignment.hpp"
#include "loopclose/cell.hpp"
#include "loopclose/cell_map.hpp"
#include "loopclose/config.hpp"
#include "loopclose/descriptor.hpp"
#include "loopclose/eig3.hpp"
#include "loopclose/histogram.hpp"
#include "loopclose/io.hpp"
#include "loopclose/loop_database.hpp"
#include "loopclose/octree.hpp"
#include "loopclose/pipeline.hpp"
#include "loopclose/pose_graph.hpp"
#include "loopclose/se3.hpp"
#include "loopclose/synthetic.hpp"
