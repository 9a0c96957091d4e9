#pragma once

#include <lyapjet/diagnostics.hpp>
#include <lyapjet/engine.hpp>
#include <lyapjet/ensemble.hpp>
#include <lyapjet/errors.hpp>
#include <lyapjet/estimators.hpp>
#include <lyapjet/linalg.hpp>
#include <lyapjet/report.hpp>
#include <lyapjet/rng.hpp>
#include <lyapjet/verify.hpp>
