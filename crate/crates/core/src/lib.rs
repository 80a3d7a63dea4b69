//! Drought-driven subsidence claim modelling.
//!
//! The pipeline turns gridded monthly climate series into standardized
//! drought indices, joins them with insurance exposure and claim data into a
//! town-year panel, and fits frequency models (GLMs, zero-inflated mixtures,
//! Poisson-deviance forests) and cost models (Gamma severity, compound
//! frequency × severity, Tweedie) with leave-future-out validation.
//!
//! Modules mirror the pipeline stages:
//! - [`climate`]: standardized 3-month indices and yearly extremes;
//! - [`panel`]: town-year panel ingestion and aggregation;
//! - [`glm`]: exponential-family regressions with exposure offsets;
//! - [`zero_inflated`]: ZIP / ZINB mixtures;
//! - [`forest`]: squared-loss and Poisson-deviance random forests;
//! - [`cost`]: severity, compound and Tweedie cost models;
//! - [`validation`]: temporal/spatial cross-validation, metrics, pruning;
//! - [`synthetic`]: ground-truth panel generation for recovery testing;
//! - [`manifest`]: reproducibility manifests for batch runs.

pub mod climate;
pub mod cost;
pub mod forest;
pub mod glm;
pub mod manifest;
pub mod numfmt;
pub mod panel;
pub mod synthetic;
pub mod validation;
pub mod zero_inflated;
