//! Release acceptance checks for the whole pipeline.
//!
//! Each test exercises one gate end to end — coefficient recovery at scale,
//! model ranking, index standardization, split-search exactness, pmf
//! normalization, compound-cost recovery, leakage protection, command-line
//! reproducibility, and severity calibration — and prints a single
//! `ACCEPTANCE <n> <gate>: PASS|FAIL` line (visible with `--nocapture`).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use argile_core::climate::{
    extreme_year_index, fit_cell_standardizers, seasonal_index, GridMonthlySeries, MonthRecord,
    Season, SeasonalEntry, SeasonalIndexSeries,
};
use argile_core::cost::{
    fit_frequency, fit_severity, frequency_criteria, simulate_compound, ModelSpec,
};
use argile_core::forest::{best_split, ForestOptions, SplitMode};
use argile_core::glm::{
    count_design, fit_glm, predict_rate, predict_record, DesignMatrix, FamilyRequest, FitOptions,
    COVARIATES,
};
use argile_core::synthetic::{generate_panel, recovery_test, write_config_toml, GeneratorConfig};
use argile_core::validation::temporal_folds;
use argile_core::zero_inflated::{fit_zero_inflated, zinb_pmf, zip_pmf, ZiKind};

/// Prints the gate verdict line, then fails the test with `detail` if the
/// gate did not hold.
#[track_caller]
fn verdict(number: u8, gate: &str, pass: bool, detail: String) {
    println!("ACCEPTANCE {number:02} {gate}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "gate {number:02} ({gate}): {detail}");
}

// ---------------------------------------------------------------------------
// 1. Reference-coefficient recovery on a national-scale panel.
// ---------------------------------------------------------------------------

#[test]
fn a01_poisson_coefficients_recovered_on_a_30k_town_panel() {
    let start = Instant::now();
    let config = GeneratorConfig::reference_2018(30_000, 1);
    let years = config.last_year - config.first_year + 1;
    let report = recovery_test(&config, ModelSpec::Poisson).expect("recovery run");
    let elapsed = start.elapsed().as_secs_f64();
    let detail = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{}: truth {} estimate {:.4} se {:.5} z {:+.2}",
                r.name, r.truth, r.estimate, r.standard_error, r.z
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let pass = config.n_towns >= 30_000 && years >= 18 && report.pass && elapsed < 120.0;
    verdict(
        1,
        "poisson recovers the reference coefficients on a 30,000-town panel within 3 SEs in under 2 minutes",
        pass,
        format!("elapsed {elapsed:.1}s; {detail}"),
    );
}

// ---------------------------------------------------------------------------
// 2. Information criteria rank the nested count families.
// ---------------------------------------------------------------------------

#[test]
fn a02_information_criteria_rank_zinb_zip_negbin_poisson() {
    let start = Instant::now();
    let seeds: Vec<u64> = (1000..1050).collect();
    let mut ordered = 0usize;
    let mut problems = Vec::new();
    for &seed in &seeds {
        let config = GeneratorConfig::reference_zero_inflated(1500, seed);
        let panel = generate_panel(&config).expect("panel generation");
        let options = FitOptions {
            training_years: Some((config.first_year, config.last_year)),
            ..FitOptions::default()
        };
        let forest = ForestOptions::default();
        let mut aic = Vec::with_capacity(4);
        let mut fit_failed = false;
        for spec in [ModelSpec::Zinb, ModelSpec::Zip, ModelSpec::NegBin, ModelSpec::Poisson] {
            match fit_frequency(spec, &panel.records, &options, &forest) {
                Ok(model) => aic.push(frequency_criteria(&model).expect("glm criteria").0),
                Err(e) => {
                    problems.push(format!("seed {seed}: {} failed: {e}", spec.name()));
                    fit_failed = true;
                    break;
                }
            }
        }
        if !fit_failed {
            if aic.windows(2).all(|w| w[0] < w[1]) {
                ordered += 1;
            } else {
                problems.push(format!(
                    "seed {seed}: aic zinb {:.1} zip {:.1} negbin {:.1} poisson {:.1}",
                    aic[0], aic[1], aic[2], aic[3]
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    problems.truncate(6);
    let pass = ordered >= 45 && elapsed < 1200.0;
    verdict(
        2,
        "aic orders zinb < zip < negbin < poisson in at least 45 of 50 seeded panels within 20 minutes",
        pass,
        format!("{ordered}/50 ordered in {elapsed:.0}s; {}", problems.join(" | ")),
    );
}

// ---------------------------------------------------------------------------
// 3. Seasonal standardization moments and unit invariance.
// ---------------------------------------------------------------------------

/// Forty years of smooth seasonal weather with uniform noise for one cell.
fn synthetic_cell(cell: &str, seed: u64) -> GridMonthlySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut months = Vec::new();
    for year in 1971..=2010 {
        for month in 1..=12u8 {
            let seasonal = (month as f64 / 12.0 * std::f64::consts::TAU).sin();
            months.push(MonthRecord {
                year,
                month,
                precipitation: (2.0 + seasonal + rng.random::<f64>() * 2.0).max(0.0),
                soil_water: (0.3 + 0.1 * seasonal + rng.random::<f64>() * 0.2).clamp(0.0, 1.0),
                soil_temperature: 278.0 + 8.0 * seasonal + rng.random::<f64>() * 3.0,
            });
        }
    }
    GridMonthlySeries { cell_id: cell.to_string(), latitude: 45.0, longitude: 3.0, months }
}

#[test]
fn a03_seasonal_indices_standardize_and_spi_ignores_precipitation_units() {
    let mut worst = String::new();
    let mut pass = true;
    let mut max_shift = 0.0f64;
    for seed in 0..5u64 {
        let cell = format!("C{seed}");
        let series = synthetic_cell(&cell, 300 + seed);
        let standardizers = fit_cell_standardizers(&series, (1971, 2010)).expect("standardizers");
        let seasonal = seasonal_index(&series, &standardizers).expect("seasonal indices");
        assert!(seasonal.entries.len() >= 150, "too few seasonal windows");
        for (name, pick) in [
            ("spi", (|e: &SeasonalEntry| e.spi) as fn(&SeasonalEntry) -> f64),
            ("sswi", |e| e.sswi),
            ("ssti", |e| e.ssti),
        ] {
            let xs: Vec<f64> = seasonal.entries.iter().map(pick).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            if mean.abs() > 0.15 || !(0.7..=1.3).contains(&var) {
                pass = false;
                worst = format!("cell {cell} {name}: mean {mean:.4} var {var:.4}");
            }
        }
        // Same record with precipitation in different units: SPI must not move.
        let mut rescaled = series.clone();
        for m in &mut rescaled.months {
            m.precipitation *= 1e-6;
        }
        let rescaled_standardizers =
            fit_cell_standardizers(&rescaled, (1971, 2010)).expect("rescaled standardizers");
        let rescaled_seasonal =
            seasonal_index(&rescaled, &rescaled_standardizers).expect("rescaled indices");
        assert_eq!(seasonal.entries.len(), rescaled_seasonal.entries.len());
        for (a, b) in seasonal.entries.iter().zip(&rescaled_seasonal.entries) {
            max_shift = max_shift.max((a.spi - b.spi).abs());
        }
    }
    if max_shift > 1e-6 {
        pass = false;
        worst = format!("{worst}; spi moved by {max_shift:.3e} under unit rescaling");
    }
    verdict(
        3,
        "40-year seasonal indices have |mean| <= 0.15 and variance in [0.7, 1.3], and spi is invariant under precipitation rescaling",
        pass,
        format!("{worst}; max spi shift {max_shift:.3e}"),
    );
}

// ---------------------------------------------------------------------------
// 4. Yearly extremes are exact seasonal order statistics.
// ---------------------------------------------------------------------------

#[test]
fn a04_yearly_extremes_equal_seasonal_minima_and_maximum_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut complete_years = 0usize;
    let mut skipped_years = 0usize;
    for fixture in 0..1000u32 {
        let n_years = rng.random_range(1..=4usize);
        let first_year = rng.random_range(1980..=2015);
        let mut entries = Vec::new();
        for dy in 0..n_years as i32 {
            for season in Season::ALL {
                entries.push(SeasonalEntry {
                    year: first_year + dy,
                    season,
                    spi: rng.random::<f64>() * 4.0 - 2.0,
                    sswi: rng.random::<f64>() * 4.0 - 2.0,
                    ssti: rng.random::<f64>() * 4.0 - 2.0,
                });
            }
        }
        // A tenth of the fixtures lose one season and must skip that year.
        let dropped_year = if fixture % 10 == 0 {
            let at = rng.random_range(0..entries.len());
            let year = entries[at].year;
            entries.remove(at);
            Some(year)
        } else {
            None
        };
        let series =
            SeasonalIndexSeries { cell_id: format!("F{fixture}"), entries: entries.clone() };
        let out = extreme_year_index(&series);
        for index in &out.indices {
            let year_entries: Vec<&SeasonalEntry> =
                entries.iter().filter(|e| e.year == index.year).collect();
            assert_eq!(year_entries.len(), 4);
            let min_spi =
                year_entries.iter().map(|e| e.spi).fold(f64::INFINITY, f64::min);
            let min_sswi =
                year_entries.iter().map(|e| e.sswi).fold(f64::INFINITY, f64::min);
            let max_ssti =
                year_entries.iter().map(|e| e.ssti).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(index.espi, min_spi, "fixture {fixture} year {}", index.year);
            assert_eq!(index.esswi, min_sswi, "fixture {fixture} year {}", index.year);
            assert_eq!(index.essti, max_ssti, "fixture {fixture} year {}", index.year);
            complete_years += 1;
        }
        if let Some(year) = dropped_year {
            assert!(out.incomplete_years.contains(&year), "fixture {fixture}");
            assert!(out.indices.iter().all(|i| i.year != year), "fixture {fixture}");
            skipped_years += 1;
        }
    }
    verdict(
        4,
        "yearly extremes equal the seasonal minima (espi, esswi) and maximum (essti) on 1,000 random fixtures",
        complete_years > 2000 && skipped_years == 100,
        format!("{complete_years} complete years checked, {skipped_years} incomplete years skipped"),
    );
}

// ---------------------------------------------------------------------------
// 5. Split search equals exhaustive enumeration in both loss modes.
// ---------------------------------------------------------------------------

/// Poisson deviance of predicting every row of a subset at the pooled rate.
fn node_deviance(y: &[f64], e: &[f64], rows: &[u32]) -> f64 {
    let sum_y: f64 = rows.iter().map(|&r| y[r as usize]).sum();
    let sum_e: f64 = rows.iter().map(|&r| e[r as usize]).sum();
    let rate = sum_y / sum_e;
    rows.iter()
        .map(|&r| {
            let (yi, mu) = (y[r as usize], e[r as usize] * rate);
            let ylny = if yi > 0.0 { yi * (yi / mu).ln() } else { 0.0 };
            2.0 * (ylny - (yi - mu))
        })
        .sum()
}

/// Squared loss of a subset around its own mean.
fn node_sse(y: &[f64], rows: &[u32]) -> f64 {
    let mean: f64 = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&r| (y[r as usize] - mean).powi(2)).sum()
}

/// Quadratic-time scan over every (feature, midpoint) pair with direct
/// row-wise losses; same midpoint fallback, `min_leaf`, and tie rules as the
/// production search.
fn exhaustive_split(
    features: &[Vec<f64>],
    y: &[f64],
    e: &[f64],
    rows: &[u32],
    min_leaf: usize,
    min_gain: f64,
    mode: SplitMode,
) -> Option<(usize, f64, f64)> {
    if rows.len() < 2 * min_leaf {
        return None;
    }
    let parent = match mode {
        SplitMode::Poisson => node_deviance(y, e, rows),
        SplitMode::Squared => node_sse(y, rows),
    };
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, col) in features.iter().enumerate() {
        let mut values: Vec<f64> = rows.iter().map(|&r| col[r as usize]).collect();
        values.sort_unstable_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mut threshold = 0.5 * (w[0] + w[1]);
            if threshold >= w[1] {
                threshold = w[0];
            }
            let (left, right): (Vec<u32>, Vec<u32>) =
                rows.iter().copied().partition(|&r| col[r as usize] <= threshold);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let children = match mode {
                SplitMode::Poisson => node_deviance(y, e, &left) + node_deviance(y, e, &right),
                SplitMode::Squared => node_sse(y, &left) + node_sse(y, &right),
            };
            let gain = parent - children;
            if gain > min_gain && best.is_none_or(|b| gain > b.2) {
                best = Some((f, threshold, gain));
            }
        }
    }
    best
}

#[test]
fn a05_best_split_matches_exhaustive_search_in_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut found = 0usize;
    for node in 0..100u32 {
        let n = rng.random_range(20..=200usize);
        let features: Vec<Vec<f64>> =
            (0..4).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..8))).collect();
        let e: Vec<f64> = (0..n).map(|_| 5.0 + 45.0 * rng.random::<f64>()).collect();
        let rows: Vec<u32> = (0..n as u32).collect();
        let min_leaf = rng.random_range(1..=8usize);
        for mode in [SplitMode::Poisson, SplitMode::Squared] {
            let got = best_split(&features, &y, &e, &rows, &[0, 1, 2, 3], min_leaf, 1e-12, mode);
            let want = exhaustive_split(&features, &y, &e, &rows, min_leaf, 1e-12, mode);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    assert_eq!(g.feature, w.0, "node {node} {mode:?}: feature");
                    assert_eq!(g.threshold, w.1, "node {node} {mode:?}: threshold");
                    let scale = w.2.abs().max(1e-12);
                    assert!(
                        (g.gain - w.2).abs() <= 1e-9 * scale.max(1.0),
                        "node {node} {mode:?}: gain {} vs {}",
                        g.gain,
                        w.2
                    );
                    found += 1;
                }
                (g, w) => panic!("node {node} {mode:?}: search {g:?} vs exhaustive {w:?}"),
            }
        }
    }
    verdict(
        5,
        "greedy split search equals exhaustive enumeration on 100 random nodes in poisson and squared modes",
        found >= 190,
        format!("{found}/200 node-mode pairs produced a split and all matched"),
    );
}

// ---------------------------------------------------------------------------
// 6. Zero-inflated pmfs normalize and the mixture nests its count model.
// ---------------------------------------------------------------------------

#[test]
fn a06_zero_inflated_pmfs_normalize_and_zip_nests_poisson() {
    // Truncated sums over y = 0..=mean + 20*sqrt(mean) must capture all but
    // < 1e-8 of the mass everywhere on the grid.
    let mut worst_gap = 0.0f64;
    let mut worst = String::new();
    for &p in &[0.0f64, 0.2, 0.5, 0.9] {
        for &mu in &[0.05f64, 0.5, 2.0, 10.0, 80.0] {
            let y_max = (mu + 20.0 * mu.sqrt()).ceil() as u64;
            let total: f64 = (0..=y_max).map(|y| zip_pmf(p, mu, y)).sum();
            let gap = (total - 1.0).abs();
            if gap > worst_gap {
                worst_gap = gap;
                worst = format!("zip p={p} mu={mu}: sum {total:.12}");
            }
        }
        for &(mu, theta) in &[
            (0.05f64, 4.0),
            (0.5, 4.0),
            (2.0, 4.0),
            (2.0, 10.0),
            (10.0, 10.0),
            (20.0, 20.0),
        ] {
            let y_max = (mu + 20.0 * mu.sqrt()).ceil() as u64;
            let total: f64 = (0..=y_max).map(|y| zinb_pmf(p, mu, theta, y)).sum();
            let gap = (total - 1.0).abs();
            if gap > worst_gap {
                worst_gap = gap;
                worst = format!("zinb p={p} mu={mu} theta={theta}: sum {total:.12}");
            }
        }
    }
    let normalized = worst_gap <= 1e-8;

    // The mixture holds the count model as its boundary case, so its fitted
    // log-likelihood can never fall below the plain fit on the same design.
    let mut nested = 0usize;
    let mut nesting_detail = String::new();
    for ds in 0..20u64 {
        let config = if ds % 2 == 0 {
            GeneratorConfig::reference_zero_inflated(200, 600 + ds)
        } else {
            let mut c = GeneratorConfig::reference_2018(200, 600 + ds);
            c.first_year = 2001;
            c.last_year = 2006;
            c.frequency.coefficients[0] = -8.0;
            c
        };
        let panel = generate_panel(&config).expect("panel generation");
        let covariates: Vec<&str> = COVARIATES.to_vec();
        let design = count_design(&panel.records, &covariates).expect("count design");
        let options = FitOptions::default();
        let poisson = fit_glm(&design, FamilyRequest::Poisson, &options).expect("poisson fit");
        let zip = fit_zero_inflated(&design, ZiKind::Zip, &options).expect("zip fit");
        let slack = 1e-6 * poisson.log_likelihood.abs().max(1.0);
        if zip.log_likelihood >= poisson.log_likelihood - slack {
            nested += 1;
        } else {
            nesting_detail = format!(
                "dataset {ds}: zip ll {:.6} < poisson ll {:.6}",
                zip.log_likelihood, poisson.log_likelihood
            );
        }
    }
    verdict(
        6,
        "zip and zinb pmfs sum to 1 within 1e-8 and the zip log-likelihood never falls below poisson on 20 datasets",
        normalized && nested == 20,
        format!("worst normalization gap {worst_gap:.3e} ({worst}); nested {nested}/20 {nesting_detail}"),
    );
}

// ---------------------------------------------------------------------------
// 7. Tweedie totals recover the compound frequency-severity surface.
// ---------------------------------------------------------------------------

#[test]
fn a07_tweedie_recovers_the_compound_mean_surface() {
    // Row-level compound draws with a log-linear rate in one covariate.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (shape, scale) = (2.0, 100.0);
    let exposure = 200.0;
    let n_rows = 6000usize;
    let mut x = Vec::with_capacity(n_rows);
    let mut y = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let xi = rng.random::<f64>() * 3.0 - 1.5;
        let lambda_e = exposure * (-3.0 + 0.5 * xi).exp();
        let total = simulate_compound(lambda_e, shape, scale, 1, 7_000 + i as u64)[0];
        x.push(xi);
        y.push(total);
    }
    let design = DesignMatrix::new(
        vec!["intercept".to_string(), "x".to_string()],
        nalgebra::DMatrix::from_fn(n_rows, 2, |i, j| if j == 0 { 1.0 } else { x[i] }),
        nalgebra::DVector::from_element(n_rows, exposure.ln()),
        nalgebra::DVector::from_vec(y),
        nalgebra::DVector::from_element(n_rows, 1.0),
    )
    .expect("design");
    let options = FitOptions { tweedie_density: false, ..FitOptions::default() };
    let fit =
        fit_glm(&design, FamilyRequest::Tweedie { power: 1.5 }, &options).expect("tweedie fit");
    let mut worst_rel = 0.0f64;
    for held_out in [-1.2f64, -0.6, 0.0, 0.6, 1.2] {
        let truth = exposure * (-3.0 + 0.5 * held_out).exp() * shape * scale;
        let predicted = predict_rate(&fit, &[held_out], exposure).expect("prediction");
        worst_rel = worst_rel.max((predicted / truth - 1.0).abs());
    }

    // Monte-Carlo mean of the simulator against the closed form.
    let (lambda_e, mc_shape, mc_scale) = (2.2, 1.4, 600.0);
    let draws = simulate_compound(lambda_e, mc_shape, mc_scale, 100_000, 777);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mc_se = sd / n.sqrt();
    let truth = lambda_e * mc_shape * mc_scale;
    let mc_gap = (mean - truth).abs();

    verdict(
        7,
        "tweedie (power 1.5) recovers the compound mean surface within 5% and the simulator mean matches lambda*shape*scale within 4 SEs",
        worst_rel < 0.05 && mc_gap <= 4.0 * mc_se,
        format!(
            "worst held-out relative error {worst_rel:.4}; mc mean {mean:.1} vs {truth:.1} (gap {mc_gap:.2}, se {mc_se:.2})"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Future-dated sentinel rows cannot reach any training fit.
// ---------------------------------------------------------------------------

#[test]
fn a08_future_dated_response_leaks_never_change_training_fits() {
    let mut config = GeneratorConfig::reference_2018(300, 88);
    config.first_year = 2001;
    config.last_year = 2008;
    config.frequency.coefficients[0] = -8.0;
    let clean = generate_panel(&config).expect("panel generation").records;
    let clean_folds = temporal_folds(&clean, 2006, 2008).expect("folds");
    let options = FitOptions::default();
    let forest = ForestOptions { trees: 15, min_leaf: 40, seed: 9, ..ForestOptions::default() };
    let mut compared = 0usize;
    for fold in &clean_folds {
        let test_year = fold.test_year.expect("temporal fold");
        // Inject the held-out year's responses as covariates on rows dated at
        // the held-out year itself: a direct answer key, visible only to a
        // leaky split.
        let mut poisoned = clean.clone();
        for r in clean.iter().filter(|r| r.year == test_year) {
            let mut sentinel = r.clone();
            sentinel.town_id = format!("{}-sentinel", r.town_id);
            sentinel.essti = r.claims as f64;
            sentinel.esswi = (r.cost_cents as f64) / 1e6;
            poisoned.push(sentinel);
        }
        let poisoned_folds = temporal_folds(&poisoned, 2006, 2008).expect("poisoned folds");
        let poisoned_fold = poisoned_folds
            .iter()
            .find(|f| f.test_year == Some(test_year))
            .expect("matching fold");
        assert_eq!(fold.train, poisoned_fold.train, "training rows changed for {test_year}");
        for spec in [ModelSpec::Poisson, ModelSpec::NegBin, ModelSpec::Zip, ModelSpec::Forest] {
            let clean_fit =
                fit_frequency(spec, &fold.train, &options, &forest).expect("clean fit");
            let poisoned_fit =
                fit_frequency(spec, &poisoned_fold.train, &options, &forest).expect("poisoned fit");
            assert_eq!(
                clean_fit.to_text(),
                poisoned_fit.to_text(),
                "{} fit changed for test year {test_year}",
                spec.name()
            );
            compared += 1;
        }
    }
    verdict(
        8,
        "training fits are bit-identical when future-dated rows carry the held-out responses",
        compared == 12,
        format!("{compared} fold-model fits compared"),
    );
}

// ---------------------------------------------------------------------------
// 9. The command-line pipeline is byte-reproducible.
// ---------------------------------------------------------------------------

/// Runs the pipeline binary, panicking with its stderr on failure.
fn run_cli(args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_argile"))
        .args(args)
        .output()
        .expect("spawn pipeline binary");
    assert!(
        output.status.success(),
        "argile {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

/// synth -> build-panel -> cv -> report inside `root`, returning the bytes of
/// every comparable output file.
fn run_pipeline(root: &Path, config: &Path) -> Vec<(String, Vec<u8>)> {
    let dir = |name: &str| root.join(name).to_string_lossy().into_owned();
    let path = |name: &str| root.join(name).to_string_lossy().into_owned();
    run_cli(&["synth", "--config", &config.to_string_lossy(), "--out", &dir("synth")]);
    run_cli(&[
        "build-panel",
        "--exposure",
        &path("synth/exposure.csv"),
        "--claims",
        &path("synth/claims.csv"),
        "--requests",
        &path("synth/cat_requests.csv"),
        "--geometry",
        &path("synth/geometry.csv"),
        "--clay",
        &path("synth/clay.csv"),
        "--extremes",
        &path("synth/extremes.csv"),
        "--out",
        &dir("panel"),
    ]);
    run_cli(&[
        "cv",
        "--panel",
        &path("panel/panel.csv"),
        "--models",
        "poisson,zip",
        "--first-test-year",
        "2006",
        "--last-test-year",
        "2007",
        "--out",
        &dir("cv"),
    ]);
    run_cli(&["report", "--cv", &path("cv/cv_report.json"), "--out", &dir("report")]);
    ["synth/panel.csv", "panel/panel.csv", "cv/cv_report.csv", "cv/cv_report.json", "report/report.txt"]
        .iter()
        .map(|name| {
            let bytes = std::fs::read(root.join(name)).unwrap_or_else(|e| {
                panic!("missing pipeline output {name}: {e}");
            });
            (name.to_string(), bytes)
        })
        .collect()
}

#[test]
fn a09_cli_pipeline_reruns_are_byte_identical() {
    let workspace = tempfile::tempdir().expect("tempdir");
    let mut config = GeneratorConfig::reference_2018(250, 123);
    config.first_year = 2001;
    config.last_year = 2007;
    config.frequency.coefficients[0] = -8.0;
    let config_path = workspace.path().join("generator.toml");
    write_config_toml(&config_path, &config).expect("config write");
    let first_root = workspace.path().join("first");
    let second_root = workspace.path().join("second");
    std::fs::create_dir_all(&first_root).expect("first run dir");
    std::fs::create_dir_all(&second_root).expect("second run dir");
    let first = run_pipeline(&first_root, &config_path);
    let second = run_pipeline(&second_root, &config_path);
    let mut mismatched = Vec::new();
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        if a != b {
            mismatched.push(name.clone());
        }
    }
    verdict(
        9,
        "synth -> build-panel -> cv -> report reruns with one seed produce byte-identical panel, cv, and report files",
        mismatched.is_empty() && first.len() == 5,
        format!("mismatched files: {mismatched:?}"),
    );
}

// ---------------------------------------------------------------------------
// 10. Severity round trip at the reference average claim cost.
// ---------------------------------------------------------------------------

#[test]
fn a10_severity_round_trip_recovers_the_reference_mean() {
    let mut config = GeneratorConfig::reference_2018(800, 909);
    // Lift the frequency intercept so the panel carries enough claims for a
    // tight severity fit; the severity law itself stays at the reference.
    config.frequency.coefficients[0] = -13.0;
    let panel = generate_panel(&config).expect("panel generation");
    let claimants: Vec<_> =
        panel.records.iter().filter(|r| r.claims > 0).cloned().collect();
    let total_claims: u64 = claimants.iter().map(|r| r.claims).sum();
    let options = FitOptions {
        training_years: Some((config.first_year, config.last_year)),
        ..FitOptions::default()
    };
    let fit = fit_severity(&claimants, &options).expect("severity fit");
    let mut weighted = 0.0f64;
    for r in &claimants {
        weighted += r.claims as f64 * predict_record(&fit, r).expect("severity prediction");
    }
    let fitted_mean = weighted / total_claims as f64;
    let rel = (fitted_mean / config.severity.mean - 1.0).abs();
    verdict(
        10,
        "gamma severity refit on 10,000+ simulated claims lands within 2% of the 16,300 reference mean",
        total_claims >= 10_000 && rel <= 0.02,
        format!("{total_claims} claims; fitted mean {fitted_mean:.1} vs {} ({:.2}%)", config.severity.mean, rel * 100.0),
    );
}
