#pragma once

// Everything in one include.

#include <splatwalk/body.hpp>
#include <splatwalk/body_io.hpp>
#include <splatwalk/camera.hpp>
#include <splatwalk/contact_refine.hpp>
#include <splatwalk/error.hpp>
#include <splatwalk/gaussian.hpp>
#include <splatwalk/hash.hpp>
#include <splatwalk/image_io.hpp>
#include <splatwalk/math.hpp>
#include <splatwalk/motion.hpp>
#include <splatwalk/nav_plan.hpp>
#include <splatwalk/optim.hpp>
#include <splatwalk/parallel.hpp>
#include <splatwalk/pipeline.hpp>
#include <splatwalk/ply.hpp>
#include <splatwalk/point_index.hpp>
#include <splatwalk/render.hpp>
#include <splatwalk/scene_field.hpp>
#include <splatwalk/synthetic.hpp>
#include <splatwalk/transition.hpp>
