#ifndef FMTS_FMTS_HPP
#define FMTS_FMTS_HPP

#include "fmts/core.hpp"
#include "fmts/density.hpp"
#include "fmts/candidate.hpp"
#include "fmts/subspace.hpp"
#include "fmts/select.hpp"
#include "fmts/simulate.hpp"
#include "fmts/pipeline.hpp"
#include "fmts/io.hpp"
#include "fmts/report.hpp"

#endif  // FMTS_FMTS_HPP
