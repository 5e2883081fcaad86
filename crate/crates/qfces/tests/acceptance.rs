//! Release gate: ten numbered criteria covering the scoring rule, the
//! statistics, the format checker, pipeline determinism, the latency
//! benchmark, and corpus statistics. Each test prints one `criterion N
//! (...): PASS` / `FAIL` line (visible with `--nocapture`) and fails the
//! build when its checks do not hold.
//!
//! Criteria that exercise the full pipeline drive the real binary against
//! the bundled fixtures; the arithmetic criteria call the library
//! directly and compare against independent oracles implemented here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use qfces::dataset::load_dataset;
use qfces::store::{load_annotations, read_ndjson, MosRecord};
use qfces_core::bench::compare_means;
use qfces_core::catalog::compute_stats;
use qfces_core::ces::{check_format, CheckCode};
use qfces_core::judge::{aggregate_matrix, ScoreDistribution, ScoreRecord};
use qfces_core::metaeval::alpha::{alpha_from_units, AlphaMetric};
use qfces_core::metaeval::annotation::{
    flag_discrepancies, merge_rounds, AnnotationSet, RoundView,
};
use qfces_core::metaeval::rank::{kendall_tau_b, spearman};
use qfces_core::metaeval::summary::{summary_level_corr, MetricMap};
use qfces_core::prompt::{
    CesMode, CesProductInput, DimensionId, TemplateSet, CES_DIMENSIONS,
};
use qfces_core::template::PromptTemplate;
use qfces_core::text::round_half_even;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($arg)+));
        }
    };
}

fn criterion<F>(number: u8, label: &str, body: F)
where
    F: FnOnce() -> Result<(), String>,
{
    match body() {
        Ok(()) => println!("criterion {number} ({label}): PASS"),
        Err(message) => {
            println!("criterion {number} ({label}): FAIL — {message}");
            panic!("criterion {number} ({label}): {message}");
        }
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_qfces"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| format!("cannot spawn binary: {e}"))?;
    if !output.status.success() {
        return Err(format!(
            "`qfces {}` exited with {:?}\nstdout:\n{}\nstderr:\n{}",
            args.join(" "),
            output.status.code(),
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr),
        ));
    }
    Ok(output)
}

// ---------------------------------------------------------------------------
// 1. Probability-weighted scoring
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_weighted_scoring() {
    criterion(1, "probability-weighted scoring", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);

        for case in 0..1_000u32 {
            let n_valid = rng.random_range(1..=200usize);
            let n_invalid = rng.random_range(0..=20usize);
            let mut samples: Vec<Option<u8>> = Vec::with_capacity(n_valid + n_invalid);
            for _ in 0..n_valid {
                samples.push(Some(rng.random_range(1..=5u8)));
            }
            for _ in 0..n_invalid {
                samples.push(None);
            }

            let direct_sum: u64 = samples.iter().flatten().map(|&s| s as u64).sum();
            let direct_mean = direct_sum as f64 / n_valid as f64;

            let dist = ScoreDistribution::from_scores(samples);
            let weighted = dist
                .weighted_score()
                .map_err(|e| format!("case {case}: {e}"))?;
            ensure!(
                weighted == direct_mean,
                "case {case}: weighted {weighted} != direct mean {direct_mean}"
            );
            ensure!(
                dist.n_valid() == n_valid as u64 && dist.n_invalid == n_invalid as u64,
                "case {case}: counts drifted"
            );
        }

        // The documented reference distribution: 60 fours and 40 fives.
        let reference = ScoreDistribution {
            counts: [0, 0, 0, 60, 40],
            n_invalid: 0,
        };
        let o = reference.weighted_score().map_err(|e| e.to_string())?;
        ensure!(o == 4.4, "counts {{4:60, 5:40}} gave {o}, want 4.40");

        let elapsed = started.elapsed();
        ensure!(
            elapsed < Duration::from_secs(1),
            "1,000 multisets took {elapsed:?}, budget is 1 s"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 2. Rank-correlation oracles
// ---------------------------------------------------------------------------

/// Average ranks (1-based, ties get the mean of their positions).
fn oracle_average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut ranks = vec![0.0f64; n];
    for i in 0..n {
        let mut below = 0usize;
        let mut equal = 0usize;
        for j in 0..n {
            if values[j] < values[i] {
                below += 1;
            } else if values[j] == values[i] {
                equal += 1;
            }
        }
        // Positions below+1 ..= below+equal share this value.
        ranks[i] = below as f64 + (equal as f64 + 1.0) / 2.0;
    }
    ranks
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_average_ranks(x), &oracle_average_ranks(y))
}

/// Tau-b by O(n^2) pair enumeration with the tie-correction denominator.
fn oracle_kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx * dy > 0.0 {
                concordant += 1;
            } else if dx * dy < 0.0 {
                discordant += 1;
            }
            // Ties in either coordinate count toward neither; the
            // denominator handles them via the per-variable tie pairs.
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - count_tie_pairs(x)) as f64) * ((n0 - count_tie_pairs(y)) as f64)).sqrt();
    (concordant - discordant) as f64 / denom
}

/// Number of within-group pairs among equal values: sum over groups of
/// `t * (t - 1) / 2`.
fn count_tie_pairs(values: &[f64]) -> i64 {
    let mut pairs = 0i64;
    let mut counted = vec![false; values.len()];
    for i in 0..values.len() {
        if counted[i] {
            continue;
        }
        let mut t = 0i64;
        for j in i..values.len() {
            if values[j] == values[i] {
                t += 1;
                counted[j] = true;
            }
        }
        pairs += t * (t - 1) / 2;
    }
    pairs
}

#[test]
fn criterion_02_rank_correlation_oracles() {
    criterion(2, "rank-correlation oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut checked = 0usize;
        while checked < 100 {
            let n = rng.random_range(2..=12usize);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5u8) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5u8) as f64).collect();
            let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
            if constant(&x) || constant(&y) {
                continue; // correlation undefined for both oracle and library
            }
            checked += 1;

            let rho = spearman(&x, &y).map_err(|e| format!("spearman: {e}"))?;
            let rho_oracle = oracle_spearman(&x, &y);
            ensure!(
                (rho - rho_oracle).abs() < 1e-9,
                "vector {checked}: spearman {rho} vs oracle {rho_oracle} (x={x:?}, y={y:?})"
            );

            let tau = kendall_tau_b(&x, &y).map_err(|e| format!("kendall: {e}"))?;
            let tau_oracle = oracle_kendall_tau_b(&x, &y);
            ensure!(
                (tau - tau_oracle).abs() < 1e-9,
                "vector {checked}: tau-b {tau} vs oracle {tau_oracle} (x={x:?}, y={y:?})"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 3. Summary-level correlation
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_summary_level_correlation() {
    criterion(3, "summary-level correlation", || {
        let mut a = MetricMap::new();
        for (q, scores) in [
            ("q1", [4.5, 3.0, 4.0, 2.5]),
            ("q2", [3.5, 3.0, 4.5, 2.0]),
            ("q3", [5.0, 4.0, 3.0, 3.5]),
        ] {
            for (i, &score) in scores.iter().enumerate() {
                a.insert((q.to_string(), format!("m{}", i + 1)), score);
            }
        }

        let identity = summary_level_corr(&a, &a, 500, 7).map_err(|e| e.to_string())?;
        ensure!(
            identity.rho == 1.0 && identity.tau == 1.0,
            "identity metrics gave rho={} tau={}, want 1.0/1.0",
            identity.rho,
            identity.tau
        );
        ensure!(
            identity.n_queries_skipped_constant == 0,
            "identity run skipped {} queries, want 0",
            identity.n_queries_skipped_constant
        );

        let mirrored: MetricMap = a.iter().map(|(k, v)| (k.clone(), 6.0 - v)).collect();
        let reversed = summary_level_corr(&a, &mirrored, 500, 7).map_err(|e| e.to_string())?;
        ensure!(
            reversed.rho == -1.0,
            "mirrored metric gave rho={}, want -1.0",
            reversed.rho
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 4. Inter-rater agreement
// ---------------------------------------------------------------------------

/// Alpha straight from the defining sums: observed disagreement averages
/// the pairwise differences within each unit, expected disagreement
/// averages them over all pooled value pairs.
fn oracle_alpha(units: &[Vec<Option<u8>>], metric: AlphaMetric) -> f64 {
    // Pooled counts over values 1..=5, pairable units only.
    let mut counts = [0.0f64; 5];
    let mut pairable: Vec<Vec<u8>> = Vec::new();
    for unit in units {
        let values: Vec<u8> = unit.iter().flatten().copied().collect();
        if values.len() >= 2 {
            for &v in &values {
                counts[(v - 1) as usize] += 1.0;
            }
            pairable.push(values);
        }
    }
    let n_total: f64 = counts.iter().sum();

    let delta = |c: u8, k: u8| -> f64 {
        match metric {
            AlphaMetric::Interval => {
                let d = c as f64 - k as f64;
                d * d
            }
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
                let between: f64 =
                    (lo..=hi).map(|v| counts[(v - 1) as usize]).sum();
                let d = between
                    - (counts[(lo - 1) as usize] + counts[(hi - 1) as usize]) / 2.0;
                d * d
            }
        }
    };

    let mut observed = 0.0;
    for values in &pairable {
        let m = values.len() as f64;
        let mut unit_sum = 0.0;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    unit_sum += delta(a, b);
                }
            }
        }
        observed += unit_sum / (m - 1.0);
    }
    let d_o = observed / n_total;

    let mut expected = 0.0;
    for c in 1..=5u8 {
        for k in 1..=5u8 {
            if c != k {
                expected += counts[(c - 1) as usize] * counts[(k - 1) as usize] * delta(c, k);
            }
        }
    }
    let d_e = expected / (n_total * (n_total - 1.0));
    1.0 - d_o / d_e
}

#[test]
fn criterion_04_inter_rater_agreement() {
    criterion(4, "inter-rater agreement", || {
        // Perfect agreement with varying item scores: alpha must be 1.0.
        let perfect: Vec<Vec<Option<u8>>> = [2u8, 3, 4, 5]
            .iter()
            .map(|&s| vec![Some(s), Some(s), Some(s)])
            .collect();
        for metric in [AlphaMetric::Ordinal, AlphaMetric::Interval] {
            let alpha = alpha_from_units(&perfect, metric)
                .map_err(|e| format!("perfect agreement ({metric:?}): {e}"))?;
            ensure!(
                alpha == 1.0,
                "perfect agreement gave alpha={alpha} under {metric:?}, want 1.0"
            );
        }

        // Canonical 3 raters x 4 units table with ties and disagreements.
        let canonical: Vec<Vec<Option<u8>>> = vec![
            vec![Some(1), Some(1), Some(2)],
            vec![Some(2), Some(3), Some(2)],
            vec![Some(3), Some(2), Some(4)],
            vec![Some(4), Some(4), Some(5)],
        ];
        for metric in [AlphaMetric::Ordinal, AlphaMetric::Interval] {
            let fast = alpha_from_units(&canonical, metric)
                .map_err(|e| format!("canonical table ({metric:?}): {e}"))?;
            let slow = oracle_alpha(&canonical, metric);
            ensure!(
                (fast - slow).abs() < 1e-9,
                "{metric:?}: coincidence-matrix alpha {fast} vs pairwise oracle {slow}"
            );
        }

        // Rater relabeling only permutes columns; alpha must not move.
        let relabeled: Vec<Vec<Option<u8>>> = canonical
            .iter()
            .map(|unit| vec![unit[2], unit[0], unit[1]])
            .collect();
        let before = alpha_from_units(&canonical, AlphaMetric::Ordinal).unwrap();
        let after = alpha_from_units(&relabeled, AlphaMetric::Ordinal).unwrap();
        ensure!(
            before == after,
            "relabeling moved alpha from {before} to {after}"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 5. Two-round protocol
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_two_round_protocol() {
    criterion(5, "two-round protocol", || {
        let round1 = AnnotationSet::new(
            load_annotations(&fixture("annotations_round1.ndjson"))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let round2 = AnnotationSet::new(
            load_annotations(&fixture("annotations_round2.ndjson"))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;

        // Spread rule: clarity scores on (q1, m1) are (5, 3, 4) -> flagged;
        // on (q1, m2) they are (4, 4, 5) -> kept.
        let flags = flag_discrepancies(&round1, 2);
        let flagged: Vec<(String, String, DimensionId)> = flags
            .flagged
            .iter()
            .map(|i| (i.query_id.clone(), i.summary_id.clone(), i.dimension))
            .collect();
        ensure!(
            flagged.contains(&("q1".into(), "m1".into(), DimensionId::Clarity)),
            "(5,3,4) item was not flagged: {flagged:?}"
        );
        ensure!(
            !flagged.contains(&("q1".into(), "m2".into(), DimensionId::Clarity)),
            "(4,4,5) item was wrongly flagged"
        );
        ensure!(
            flagged.len() == 2,
            "expected exactly 2 flagged items, got {flagged:?}"
        );
        ensure!(flags.incomplete.is_empty(), "no item should be incomplete");

        // Merging replaces exactly the flagged items.
        let merged = merge_rounds(&round1, &round2, 2).map_err(|e| e.to_string())?;
        let after = merged.scores_by_item(RoundView::Round2);
        let before = merged.scores_by_item(RoundView::Round1);

        let key = |q: &str, s: &str, d: DimensionId| {
            qfces_core::metaeval::annotation::ItemKey {
                query_id: q.to_string(),
                summary_id: s.to_string(),
                dimension: d,
            }
        };

        let revised = &after[&key("q1", "m1", DimensionId::Clarity)];
        ensure!(
            revised["r1"] == 4 && revised["r2"] == 4 && revised["r3"] == 4,
            "flagged item not revised as recorded: {revised:?}"
        );
        let untouched = &after[&key("q1", "m2", DimensionId::Clarity)];
        ensure!(
            untouched["r1"] == 4 && untouched["r2"] == 4 && untouched["r3"] == 5,
            "unflagged item changed: {untouched:?}"
        );
        // The round-1 snapshot is preserved inside the merged set.
        let original = &before[&key("q1", "m1", DimensionId::Clarity)];
        ensure!(
            original["r1"] == 5 && original["r2"] == 3,
            "round-1 snapshot lost after merge: {original:?}"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 6. Format-check mutation matrix
// ---------------------------------------------------------------------------

const GOLDEN_CES: &str = include_str!("../../core/tests/fixtures/golden_ces.txt");

#[test]
fn criterion_06_format_check_mutations() {
    criterion(6, "format-check mutations", || {
        let golden = check_format(GOLDEN_CES);
        ensure!(golden.checks.len() == 8, "expected 8 checks");
        ensure!(
            golden.passed_all,
            "golden text failed: {:?}",
            golden.failed_codes()
        );

        let drop_lines_containing = |needle: &str| -> String {
            GOLDEN_CES
                .lines()
                .filter(|l| !l.contains(needle))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let verdict_at = GOLDEN_CES
            .find("Final Verdict")
            .ok_or("golden text lacks a verdict")?;
        let no_pipes = GOLDEN_CES
            .lines()
            .filter(|l| !l.trim_start().starts_with('|'))
            .collect::<Vec<_>>()
            .join("\n");
        let drop_last_column = GOLDEN_CES
            .lines()
            .map(|l| {
                let t = l.trim_end();
                if t.starts_with('|') {
                    let without_trailing = t.trim_end_matches('|').trim_end();
                    let keep = without_trailing
                        .rfind('|')
                        .map(|i| &without_trailing[..i])
                        .unwrap_or(without_trailing);
                    format!("{} |", keep.trim_end())
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");

        let mutants: Vec<(&str, String, CheckCode)> = vec![
            ("drop table", no_pipes, CheckCode::TablePresent),
            ("drop a column", drop_last_column, CheckCode::ThreeProductColumns),
            (
                "drop the Cons row",
                drop_lines_containing("| Cons |"),
                CheckCode::RequiredRowsPresent,
            ),
            (
                "drop both dynamic rows",
                GOLDEN_CES
                    .lines()
                    .filter(|l| {
                        !l.contains("| Battery Life |") && !l.contains("| Weight |")
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
                CheckCode::DynamicRowPresent,
            ),
            (
                "rename a row to a placeholder",
                GOLDEN_CES.replace("| Battery Life |", "| Attribute 1 |"),
                CheckCode::NoPlaceholderAttributes,
            ),
            (
                "blank out an NA cell",
                GOLDEN_CES.replace("| NA |", "|  |"),
                CheckCode::MissingMarkedNa,
            ),
            (
                "truncate before the verdict",
                GOLDEN_CES[..verdict_at].to_string(),
                CheckCode::VerdictPresent,
            ),
            (
                "shrink the verdict",
                format!(
                    "{}Final Verdict: Get the Chromebook.\n",
                    &GOLDEN_CES[..verdict_at]
                ),
                CheckCode::VerdictNontrivial,
            ),
        ];
        ensure!(mutants.len() == 8, "one mutant per check");

        for (name, text, target) in &mutants {
            ensure!(
                text != GOLDEN_CES,
                "mutation '{name}' left the text unchanged"
            );
            let failed = check_format(text).failed_codes();
            ensure!(
                failed == vec![*target],
                "mutation '{name}': expected exactly [{target:?}] to fail, got {failed:?}"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 7. Reported-number arithmetic
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_reported_number_arithmetic() {
    criterion(7, "reported-number arithmetic", || {
        // Five dimension means realized as exact /100 distributions.
        let cell_counts: [(DimensionId, [u64; 5]); 5] = [
            (DimensionId::Clarity, [0, 0, 0, 53, 47]),          // 4.47
            (DimensionId::Faithfulness, [0, 0, 0, 59, 41]),     // 4.41
            (DimensionId::Informativeness, [0, 0, 0, 42, 58]),  // 4.58
            (DimensionId::FormatAdherence, [0, 0, 0, 64, 36]),  // 4.36
            (DimensionId::QueryRelevance, [0, 0, 0, 37, 63]),   // 4.63
        ];
        let records: Vec<ScoreRecord> = cell_counts
            .iter()
            .map(|&(dim, counts)| {
                ScoreRecord::new(
                    "ces:q1:mos",
                    "reference-model",
                    dim,
                    ScoreDistribution {
                        counts,
                        n_invalid: 0,
                    },
                    100,
                )
                .expect("valid distribution")
            })
            .collect();
        let matrix = aggregate_matrix(&records, &CES_DIMENSIONS).map_err(|e| e.to_string())?;
        let average = matrix.rows[0].average;
        ensure!(
            (average - 4.49).abs() <= 0.005,
            "aggregate average {average} not within 0.005 of 4.49"
        );
        ensure!(
            round_half_even(average, 2) == 4.49,
            "half-even rounding of {average} missed 4.49"
        );

        // The latency-reduction headline from its two mean latencies.
        let reduction = compare_means(9_990.0, 16_550.0).map_err(|e| e.to_string())?;
        ensure!(
            (reduction - 39.64).abs() <= 0.01,
            "compare_means(9990, 16550) = {reduction}, want 39.64 +/- 0.01"
        );
        ensure!(
            (38.0..42.0).contains(&reduction),
            "reduction {reduction} is not approximately 40%"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 8. End-to-end determinism
// ---------------------------------------------------------------------------

/// Collects (relative path, bytes) for every file under `root`.
fn tree_contents(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fn walk(
        root: &Path,
        dir: &Path,
        out: &mut BTreeMap<String, Vec<u8>>,
    ) -> Result<(), String> {
        for entry in std::fs::read_dir(dir).map_err(|e| format!("read_dir {dir:?}: {e}"))? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .map_err(|e| e.to_string())?
                    .to_string_lossy()
                    .into_owned();
                let bytes =
                    std::fs::read(&path).map_err(|e| format!("read {path:?}: {e}"))?;
                out.insert(rel, bytes);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

#[test]
fn criterion_08_end_to_end_determinism() {
    criterion(8, "end-to-end determinism", || {
        let started = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config_text = format!(
            r#"
[dataset]
path = "{dataset}"

[run]
seed = 2024

[evaluation]
n_samples = 10

[backends.local]
kind = "mock"
model = "mock-pipeline"

[pipeline]
backend = "local"
"#,
            dataset = fixture("dataset_small.ndjson").display()
        );
        let config_path = dir.path().join("qfces.toml");
        std::fs::write(&config_path, config_text).map_err(|e| e.to_string())?;
        let cfg = config_path.to_str().ok_or("config path is not UTF-8")?;

        for run_id in ["run-a", "run-b"] {
            for step in [
                vec!["ingest"],
                vec!["gen-mos"],
                vec!["gen-ces", "--mode", "mos"],
                vec!["check-format", "--mode", "mos"],
                vec!["judge", "--dims", "ces", "--mode", "mos"],
                vec!["report"],
            ] {
                let mut args = vec!["--config", cfg, "--run-id", run_id];
                args.extend(step.iter().copied());
                run_cli(dir.path(), &args)?;
            }
        }

        let tree_a = tree_contents(&dir.path().join("out/run-a"))?;
        let tree_b = tree_contents(&dir.path().join("out/run-b"))?;
        ensure!(!tree_a.is_empty(), "first run produced no files");
        let names_a: Vec<&String> = tree_a.keys().collect();
        let names_b: Vec<&String> = tree_b.keys().collect();
        ensure!(
            names_a == names_b,
            "run directories differ in file sets:\n  a: {names_a:?}\n  b: {names_b:?}"
        );
        for (name, bytes_a) in &tree_a {
            let bytes_b = &tree_b[name];
            ensure!(
                bytes_a == bytes_b,
                "file {name} differs between the two runs ({} vs {} bytes)",
                bytes_a.len(),
                bytes_b.len()
            );
        }
        ensure!(
            tree_a.contains_key("judge/scores.ndjson")
                && tree_a.contains_key("reports/scores.json"),
            "pipeline did not reach the judging and reporting stages: {names_a:?}"
        );

        let elapsed = started.elapsed();
        ensure!(
            elapsed < Duration::from_secs(30),
            "two full pipeline runs took {elapsed:?}, budget is 30 s"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 9. Latency benchmark
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_latency_benchmark() {
    criterion(9, "latency benchmark", || {
        let started = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config_text = format!(
            r#"
[dataset]
path = "{dataset}"

[run]
seed = 5

[templates]
dir = "{templates}"

[backends.timed]
kind = "mock"
model = "mock-timed"
per_input_token_ms = 1.0

[pipeline]
backend = "timed"

[bench]
iterations = 50
mos_store = "{mos_store}"
"#,
            dataset = fixture("bench_dataset.ndjson").display(),
            templates = fixture("bench_templates").display(),
            mos_store = fixture("bench_mos_store.ndjson").display(),
        );
        let config_path = dir.path().join("qfces.toml");
        std::fs::write(&config_path, config_text).map_err(|e| e.to_string())?;
        let cfg = config_path.to_str().ok_or("config path is not UTF-8")?;

        run_cli(dir.path(), &["--config", cfg, "ingest"])?;
        let bench = run_cli(dir.path(), &["--config", cfg, "bench", "--json"])?;
        let output: serde_json::Value =
            serde_json::from_slice(&bench.stdout).map_err(|e| format!("bench JSON: {e}"))?;
        let report = &output["report"];
        let mean_mos = report["mean_mos_ms"].as_f64().ok_or("missing mean_mos_ms")?;
        let mean_dia = report["mean_dia_ms"].as_f64().ok_or("missing mean_dia_ms")?;
        let reduction = report["reduction_percent"]
            .as_f64()
            .ok_or("missing reduction_percent")?;

        // Predict the outcome from prompt word counts alone: the timed
        // backend charges exactly 1 ms per input word.
        let loaded = load_dataset(&fixture("bench_dataset.ndjson"), true)
            .map_err(|e| e.to_string())?;
        let summaries: Vec<MosRecord> =
            read_ndjson(&fixture("bench_mos_store.ndjson")).map_err(|e| e.to_string())?;
        let summary_of = |query_id: &str, product_id: &str| -> Result<String, String> {
            summaries
                .iter()
                .find(|r| r.query_id == query_id && r.product_id == product_id)
                .map(|r| r.text.clone())
                .ok_or_else(|| format!("no bundled summary for {query_id}/{product_id}"))
        };

        let mut templates = TemplateSet::default();
        for id in ["ces_gen_mos", "ces_gen_dia"] {
            let raw = std::fs::read_to_string(fixture(&format!("bench_templates/{id}.txt")))
                .map_err(|e| e.to_string())?;
            templates.set(PromptTemplate::parse(id, &raw));
        }

        let mut predicted_mos = Vec::new();
        let mut predicted_dia = Vec::new();
        for instance in &loaded.dataset.instances {
            let with_summaries: Vec<CesProductInput> = instance
                .products
                .iter()
                .map(|p| {
                    Ok(CesProductInput {
                        product: p.clone(),
                        opinion_summary: Some(summary_of(&instance.query_id, &p.product_id)?),
                    })
                })
                .collect::<Result<_, String>>()?;
            let raw_only: Vec<CesProductInput> = instance
                .products
                .iter()
                .map(|p| CesProductInput {
                    product: p.clone(),
                    opinion_summary: None,
                })
                .collect();

            let mos_prompt = templates
                .render_ces_generation(&instance.query, &with_summaries, CesMode::Mos)
                .map_err(|e| e.to_string())?;
            let dia_prompt = templates
                .render_ces_generation(&instance.query, &raw_only, CesMode::Dia)
                .map_err(|e| e.to_string())?;
            let mos_words = mos_prompt.word_count() as f64;
            let dia_words = dia_prompt.word_count() as f64;
            ensure!(
                mos_words <= 0.5 * dia_words,
                "query {}: summary prompt has {mos_words} words, more than half of the \
                 raw-input prompt's {dia_words}",
                instance.query_id
            );
            predicted_mos.push(mos_words);
            predicted_dia.push(dia_words);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let predicted_reduction =
            100.0 * (mean(&predicted_dia) - mean(&predicted_mos)) / mean(&predicted_dia);

        ensure!(
            mean_mos < mean_dia,
            "mean latencies inverted: mos {mean_mos} ms vs dia {mean_dia} ms"
        );
        ensure!(
            (reduction - predicted_reduction).abs() <= 5.0,
            "reported reduction {reduction}% not within 5 points of word-count \
             prediction {predicted_reduction}%"
        );

        let elapsed = started.elapsed();
        ensure!(
            elapsed < Duration::from_secs(120),
            "benchmark run took {elapsed:?}, budget is 2 min"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 10. Dataset statistics
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_dataset_statistics() {
    criterion(10, "dataset statistics", || {
        let hand = load_dataset(&fixture("stats_hand.ndjson"), true)
            .map_err(|e| e.to_string())?;
        let stats = compute_stats(&hand.dataset).map_err(|e| e.to_string())?;

        // Every field against a count done by hand on the fixture text.
        ensure!(stats.n_unique_queries == 1, "queries: {}", stats.n_unique_queries);
        ensure!(stats.n_total_products == 3, "products: {}", stats.n_total_products);
        ensure!(
            stats.avg_reviews_per_product == 1.0,
            "reviews/product: {}",
            stats.avg_reviews_per_product
        );
        ensure!(
            stats.avg_spec_words == 3.0,
            "spec words: {} (want (2+3+4)/3)",
            stats.avg_spec_words
        );
        ensure!(
            stats.avg_review_words == 4.0,
            "review words: {}",
            stats.avg_review_words
        );
        ensure!(
            stats.avg_description_words == 6.0,
            "description words: {} (want (4+6+8)/3)",
            stats.avg_description_words
        );
        ensure!(
            stats.avg_key_feature_words == 2.0,
            "key-feature words: {}",
            stats.avg_key_feature_words
        );

        // A corpus with uniformly 10 reviews per product reproduces the
        // documented reviews-per-product average of 10.
        let uniform = load_dataset(&fixture("uniform_reviews.ndjson"), true)
            .map_err(|e| e.to_string())?;
        let uniform_stats = compute_stats(&uniform.dataset).map_err(|e| e.to_string())?;
        ensure!(
            uniform_stats.avg_reviews_per_product == 10.0,
            "uniform corpus reviews/product: {}",
            uniform_stats.avg_reviews_per_product
        );
        Ok(())
    });
}
