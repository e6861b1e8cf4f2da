//! Batch drivers that turn specs and channel points into tables.
//!
//! Everything here is a thin layer over the estimator: sweeps walk a
//! grid of channel parameters, paired runs reuse the same noise streams
//! so two decoders or two constructions can be compared trial by trial,
//! and the exporters render results as CSV or JSON. Stream coordinates
//! are chosen so that re-running any cell reproduces it exactly.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{channel_llr, transmit, ChannelModel};
use crate::code::{message_to_uvector, polar_encode, BitVector, CodeSpec};
use crate::decoder::{dscf_decode, CheckNode, DscfConfig, ScDecoder};
use crate::estimator::{
    convergence_report, estimate, estimate_exhaustive, flip_candidate_set, ConvergenceReport,
    EstimateMode, EstimateOptions, EstimatorDecoder, ExhaustiveReport, ProfileSummary, StopRule,
    STAGE_CLIP,
};
use crate::rng::{chunk_rng, StreamDomain, StreamKey};
use crate::{Error, Result};

/// Builds a worker pool, honoring an explicit count, then the
/// POLAR_TOOLBOX_WORKERS variable, then the rayon default.
pub fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let count = match workers {
        Some(c) => Some(c),
        None => match std::env::var("POLAR_TOOLBOX_WORKERS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Error::Config(format!("POLAR_TOOLBOX_WORKERS is not a worker count: {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(c) = count {
        builder = builder.num_threads(c);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Decoder choice for a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SweepDecoder {
    Sc,
    Scl {
        list_size: usize,
        crc_aided: bool,
    },
    /// Flip decoding. When `gamma` is set, a pilot profile restricts the
    /// flip candidates to positions estimated at or above it.
    Dscf {
        attempts: usize,
        alpha: f64,
        gamma: Option<f64>,
    },
}

/// One sweep: every spec is evaluated at every channel point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub specs: Vec<CodeSpec>,
    pub points: Vec<ChannelModel>,
    pub decoder: SweepDecoder,
    pub stop: StopRule,
    pub chunk_size: u64,
    pub seed: u64,
    /// Share noise and payload streams across specs at the same point,
    /// enabling trial-by-trial comparisons. Requires equal block lengths.
    pub paired: bool,
    pub check_node: CheckNode,
    pub random_payload: bool,
    /// Keep per-trial outcomes on each row for paired significance
    /// tests.
    pub collect_outcomes: bool,
}

impl SweepConfig {
    pub fn new(specs: Vec<CodeSpec>, points: Vec<ChannelModel>, decoder: SweepDecoder) -> Self {
        SweepConfig {
            specs,
            points,
            decoder,
            stop: StopRule::default(),
            chunk_size: 256,
            seed: 0,
            paired: false,
            check_node: CheckNode::Exact,
            random_payload: false,
            collect_outcomes: false,
        }
    }
}

/// One (spec, point) cell of a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec_id: String,
    pub channel_type: String,
    pub design_point: f64,
    pub decoder: String,
    pub list_size: Option<usize>,
    pub samples: u64,
    pub errors: u64,
    pub bler_mc: f64,
    /// Soft block-error estimate; absent for flip decoding, which has no
    /// per-position reliability trace.
    pub bler_estimator: Option<f64>,
    pub wall_s: f64,
    /// Whether the stop rule reached its error target.
    pub converged: bool,
    #[serde(skip)]
    pub outcomes: Option<Vec<bool>>,
}

/// Runs the sweep cell by cell, points outermost. Lane is the point
/// index; slot is 0 for paired sweeps and the spec index otherwise, so
/// paired cells at one point consume identical streams.
pub fn run_bler_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.specs.is_empty() || config.points.is_empty() {
        return Err(Error::Config("sweep needs at least one spec and one point".into()));
    }
    if config.points.len() > usize::from(u16::MAX) || config.specs.len() > usize::from(u16::MAX) {
        return Err(Error::Config("sweep exceeds the available stream lanes".into()));
    }
    if config.paired {
        let n0 = config.specs[0].block_len();
        if config.specs.iter().any(|s| s.block_len() != n0) {
            return Err(Error::Config(
                "paired sweeps require one common block length".into(),
            ));
        }
    }
    for point in &config.points {
        point.validate()?;
    }

    let mut rows = Vec::with_capacity(config.points.len() * config.specs.len());
    for (pi, point) in config.points.iter().enumerate() {
        for (si, spec) in config.specs.iter().enumerate() {
            let lane = pi as u16;
            let slot = if config.paired { 0 } else { si as u16 };
            let started = Instant::now();
            let mut row = match &config.decoder {
                SweepDecoder::Sc => {
                    estimator_row(spec, point, config, lane, slot, EstimatorDecoder::Sc, false)?
                }
                SweepDecoder::Scl {
                    list_size,
                    crc_aided,
                } => estimator_row(
                    spec,
                    point,
                    config,
                    lane,
                    slot,
                    EstimatorDecoder::Scl {
                        list_size: *list_size,
                    },
                    *crc_aided,
                )?,
                SweepDecoder::Dscf {
                    attempts,
                    alpha,
                    gamma,
                } => dscf_row(spec, point, config, lane, slot, *attempts, *alpha, *gamma)?,
            };
            row.wall_s = started.elapsed().as_secs_f64();
            rows.push(row);
        }
    }
    Ok(rows)
}

fn estimator_row(
    spec: &CodeSpec,
    point: &ChannelModel,
    config: &SweepConfig,
    lane: u16,
    slot: u16,
    decoder: EstimatorDecoder,
    crc_aided: bool,
) -> Result<SweepRow> {
    let options = EstimateOptions {
        mode: EstimateMode::Practical,
        decoder,
        crc_aided,
        stop: config.stop,
        chunk_size: config.chunk_size,
        seed: config.seed,
        domain: StreamDomain::Sweep,
        lane,
        slot,
        clip: STAGE_CLIP,
        check_node: config.check_node,
        random_payload: config.random_payload,
        collect_outcomes: config.collect_outcomes,
    };
    let report = estimate(spec, point, &options)?;
    let (name, list_size) = match decoder {
        EstimatorDecoder::Sc => ("sc", None),
        EstimatorDecoder::Scl { list_size } => ("scl", Some(list_size)),
    };
    Ok(SweepRow {
        spec_id: spec.id(),
        channel_type: point.channel_type().into(),
        design_point: point.parameter(),
        decoder: name.into(),
        list_size,
        samples: report.summary.samples,
        errors: report.summary.errors,
        bler_mc: report.summary.mc_bler,
        bler_estimator: Some(report.summary.estimator_bler),
        wall_s: 0.0,
        converged: report.converged,
        outcomes: report.outcomes,
    })
}

#[allow(clippy::too_many_arguments)]
fn dscf_row(
    spec: &CodeSpec,
    point: &ChannelModel,
    config: &SweepConfig,
    lane: u16,
    slot: u16,
    attempts: usize,
    alpha: f64,
    gamma: Option<f64>,
) -> Result<SweepRow> {
    if spec.crc().is_none() {
        return Err(Error::Config("flip decoding requires a CRC".into()));
    }
    // The candidate pilot draws from the Estimate domain so the flip set
    // is chosen on noise the evaluation never sees.
    let candidate_set = match gamma {
        None => None,
        Some(g) => {
            let pilot_options = EstimateOptions {
                mode: EstimateMode::Practical,
                decoder: EstimatorDecoder::Sc,
                crc_aided: false,
                stop: config.stop,
                chunk_size: config.chunk_size,
                seed: config.seed,
                domain: StreamDomain::Estimate,
                lane,
                slot,
                clip: STAGE_CLIP,
                check_node: config.check_node,
                random_payload: false,
                collect_outcomes: false,
            };
            let pilot = estimate(spec, point, &pilot_options)?;
            Some(flip_candidate_set(&pilot.summary, g))
        }
    };
    let dscf_config = DscfConfig {
        alpha,
        attempts,
        candidate_set,
        gamma,
    };

    let noise_key = StreamKey::new(StreamDomain::Sweep, lane.into(), slot.into());
    let payload_key = StreamKey::new(StreamDomain::Payload, lane.into(), slot.into());
    let zero_payload = BitVector::zeros(spec.payload_len());
    let zero_x = polar_encode(&message_to_uvector(&zero_payload, spec)?, spec)?;

    let body = |chunk_index: u32, samples: u64| -> Result<McChunk> {
        let mut noise_rng = chunk_rng(config.seed, noise_key, chunk_index);
        let mut payload_rng = chunk_rng(config.seed, payload_key, chunk_index);
        let mut decoder = ScDecoder::with_check_node(spec.block_len(), config.check_node)?;
        let mut errors = 0u64;
        let mut outcomes = config.collect_outcomes.then(Vec::new);
        for _ in 0..samples {
            let (payload, x) = if config.random_payload {
                let payload = BitVector::from_bits(
                    (0..spec.payload_len())
                        .map(|_| u8::from(payload_rng.gen::<bool>()))
                        .collect::<Vec<u8>>(),
                )?;
                let x = polar_encode(&message_to_uvector(&payload, spec)?, spec)?;
                (payload, x)
            } else {
                (zero_payload.clone(), zero_x.clone())
            };
            let y = transmit(&x, point, &mut noise_rng);
            let llrs = channel_llr(&y, point)?;
            let out = dscf_decode(spec, &llrs, &dscf_config, &mut decoder)?;
            let error = out.info_bits[..spec.payload_len()] != *payload.as_slice();
            if error {
                errors += 1;
            }
            if let Some(v) = outcomes.as_mut() {
                v.push(error);
            }
        }
        Ok(McChunk {
            samples,
            errors,
            outcomes,
        })
    };
    let (samples, errors, outcomes, converged) =
        run_chunked_mc(config.stop, config.chunk_size, &body)?;

    Ok(SweepRow {
        spec_id: spec.id(),
        channel_type: point.channel_type().into(),
        design_point: point.parameter(),
        decoder: "dscf".into(),
        list_size: None,
        samples,
        errors,
        bler_mc: errors as f64 / samples as f64,
        bler_estimator: None,
        wall_s: 0.0,
        converged,
        outcomes,
    })
}

struct McChunk {
    samples: u64,
    errors: u64,
    outcomes: Option<Vec<bool>>,
}

/// Chunked Monte Carlo scheduler with the same determinism contract as
/// the estimator: chunks run in parallel waves, results fold in chunk
/// order, and the stop rule is applied at chunk granularity.
fn run_chunked_mc<F>(
    stop: StopRule,
    chunk_size: u64,
    body: &F,
) -> Result<(u64, u64, Option<Vec<bool>>, bool)>
where
    F: Fn(u32, u64) -> Result<McChunk> + Sync,
{
    if chunk_size == 0 || stop.max_samples == 0 {
        return Err(Error::Config("chunk size and sample budget must be positive".into()));
    }
    let wave = rayon::current_num_threads().max(1) * 2;
    let mut samples = 0u64;
    let mut errors = 0u64;
    let mut outcomes: Option<Vec<bool>> = None;
    let mut next_chunk = 0u32;
    let mut stopped = false;

    while !stopped && samples < stop.max_samples {
        let mut batch = Vec::with_capacity(wave);
        let mut planned = samples;
        for _ in 0..wave {
            if planned >= stop.max_samples {
                break;
            }
            let take = chunk_size.min(stop.max_samples - planned);
            batch.push((next_chunk, take));
            planned += take;
            next_chunk += 1;
        }
        if batch.is_empty() {
            break;
        }
        let results: Result<Vec<McChunk>> = batch
            .par_iter()
            .map(|&(ci, ns)| body(ci, ns))
            .collect();
        for chunk in results? {
            samples += chunk.samples;
            errors += chunk.errors;
            if let Some(one) = chunk.outcomes {
                outcomes.get_or_insert_with(Vec::new).extend(one);
            }
            if errors >= stop.target_errors {
                stopped = true;
                break;
            }
        }
    }
    Ok((samples, errors, outcomes, errors >= stop.target_errors))
}

/// McNemar-style discordant-pair comparison of two outcome sequences.
/// Trials beyond the shorter sequence are ignored.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PairedComparison {
    pub trials: u64,
    /// First errs, second does not.
    pub n01: u64,
    /// Second errs, first does not.
    pub n10: u64,
    /// (n01 - n10) / sqrt(n01 + n10); zero when no discordant pairs.
    pub z: f64,
}

pub fn paired_significance(first: &[bool], second: &[bool]) -> PairedComparison {
    let mut n01 = 0u64;
    let mut n10 = 0u64;
    let mut trials = 0u64;
    for (&a, &b) in first.iter().zip(second) {
        trials += 1;
        match (a, b) {
            (true, false) => n01 += 1,
            (false, true) => n10 += 1,
            _ => {}
        }
    }
    let discordant = n01 + n10;
    let z = if discordant == 0 {
        0.0
    } else {
        (n01 as f64 - n10 as f64) / (discordant as f64).sqrt()
    };
    PairedComparison {
        trials,
        n01,
        n10,
        z,
    }
}

/// Convergence trajectories plus an optional exact reference for finite
/// channels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub convergence: ConvergenceReport,
    pub reference: Option<ExhaustiveReport>,
}

pub fn run_estimator_comparison(
    spec: &CodeSpec,
    channel: &ChannelModel,
    options: &EstimateOptions,
    grid: &[u64],
    runs: usize,
    exhaustive_reference: bool,
) -> Result<ComparisonReport> {
    let convergence = convergence_report(spec, channel, options, grid, runs)?;
    let reference = if exhaustive_reference {
        Some(estimate_exhaustive(spec, channel, options.mode)?)
    } else {
        None
    };
    Ok(ComparisonReport {
        convergence,
        reference,
    })
}

/// Set difference of two information sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BitmapDiff {
    pub first: String,
    pub second: String,
    pub only_first: Vec<usize>,
    pub only_second: Vec<usize>,
}

/// Renderable comparison of information-bit layouts.
#[derive(Clone, Debug)]
pub struct BitmapExport {
    pub text: String,
    pub diffs: Vec<BitmapDiff>,
}

/// Renders each spec's information mask as a `rows` by N/rows grid of
/// 0/1 characters (position c*rows + r + 1 at row r, column c), followed
/// by pairwise set differences.
pub fn export_bit_distribution(specs: &[CodeSpec], rows: usize) -> Result<BitmapExport> {
    if specs.is_empty() {
        return Err(Error::Config("nothing to export".into()));
    }
    let n = specs[0].block_len();
    if specs.iter().any(|s| s.block_len() != n) {
        return Err(Error::Config(
            "bitmap export requires one common block length".into(),
        ));
    }
    if rows == 0 || !n.is_multiple_of(rows) {
        return Err(Error::Config(format!(
            "{rows} rows do not divide a block of {n}"
        )));
    }
    let cols = n / rows;
    let mut text = String::new();
    for spec in specs {
        writeln!(text, "# {} ({}/{})", spec.id(), spec.k_total(), n).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                if c > 0 {
                    text.push(',');
                }
                let pos = c * rows + r + 1;
                text.push(if spec.is_info(pos) { '1' } else { '0' });
            }
            text.push('\n');
        }
        text.push('\n');
    }

    let mut diffs = Vec::new();
    for i in 0..specs.len() {
        for j in i + 1..specs.len() {
            let a = specs[i].info_set();
            let b = specs[j].info_set();
            let only_first: Vec<usize> =
                a.iter().copied().filter(|p| !b.contains(p)).collect();
            let only_second: Vec<usize> =
                b.iter().copied().filter(|p| !a.contains(p)).collect();
            if !(only_first.is_empty() && only_second.is_empty()) {
                writeln!(
                    text,
                    "# diff {} vs {}: +{:?} -{:?}",
                    specs[i].id(),
                    specs[j].id(),
                    only_first,
                    only_second
                )
                .unwrap();
            }
            diffs.push(BitmapDiff {
                first: specs[i].id(),
                second: specs[j].id(),
                only_first,
                only_second,
            });
        }
    }
    Ok(BitmapExport { text, diffs })
}

/// CSV rendering of sweep rows. The final wall_s column is the only
/// nondeterministic field.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "spec_id,channel_type,design_point,decoder,list_size,samples,errors,bler_mc,bler_estimator,wall_s\n",
    );
    for row in rows {
        let list = row.list_size.map(|l| l.to_string()).unwrap_or_default();
        let est = row
            .bler_estimator
            .map(|e| e.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.spec_id,
            row.channel_type,
            row.design_point,
            row.decoder,
            list,
            row.samples,
            row.errors,
            row.bler_mc,
            est,
            row.wall_s
        )
        .unwrap();
    }
    out
}

/// CSV rendering of a bit-error profile: a commented JSON header line
/// with the block-level numbers, then one row per information position.
pub fn profile_to_csv(summary: &ProfileSummary) -> String {
    let header = json!({
        "samples": summary.samples,
        "errors": summary.errors,
        "estimator_bler": summary.estimator_bler,
        "mc_bler": summary.mc_bler,
    });
    let mut out = format!("# {header}\nindex,estimate,variance,n\n");
    for (i, &pos) in summary.info_set.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            pos, summary.estimates[i], summary.variances[i], summary.samples
        )
        .unwrap();
    }
    out
}

/// CSV rendering of a convergence comparison: per-grid-point means and
/// spreads of both block-error readings, with the exact reference (when
/// present) in a commented header.
pub fn comparison_to_csv(report: &ComparisonReport) -> String {
    let mut out = String::new();
    if let Some(reference) = &report.reference {
        let header = json!({
            "reference_estimator_bler": reference.estimator_bler,
            "reference_protocol_bler": reference.protocol_bler,
            "outputs": reference.outputs,
        });
        writeln!(out, "# {header}").unwrap();
    }
    out.push_str("samples,estimator_mean,estimator_std,mc_mean,mc_std\n");
    for row in &report.convergence.summary {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.samples, row.estimator_mean, row.estimator_std, row.mc_mean, row.mc_std
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::CrcSpec;

    fn spec_8_4() -> CodeSpec {
        CodeSpec::new(8, 4, vec![4, 6, 7, 8]).unwrap()
    }

    fn crc_spec_32() -> CodeSpec {
        CodeSpec::with_options(
            32,
            8,
            (9..=32).collect(),
            Some(CrcSpec::crc16()),
            None,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn sweep_emits_one_row_per_cell_and_reruns_identically() {
        let config = SweepConfig {
            stop: StopRule {
                target_errors: 15,
                max_samples: 20_000,
            },
            seed: 9,
            ..SweepConfig::new(
                vec![spec_8_4()],
                vec![
                    ChannelModel::Bsc { p: 0.05 },
                    ChannelModel::Bsc { p: 0.1 },
                ],
                SweepDecoder::Sc,
            )
        };
        let a = run_bler_sweep(&config).unwrap();
        let b = run_bler_sweep(&config).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.samples, y.samples);
            assert_eq!(x.errors, y.errors);
            assert_eq!(x.bler_mc.to_bits(), y.bler_mc.to_bits());
            assert_eq!(
                x.bler_estimator.unwrap().to_bits(),
                y.bler_estimator.unwrap().to_bits()
            );
        }
        let csv = sweep_to_csv(&a);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "spec_id,channel_type,design_point,decoder,list_size,samples,errors,bler_mc,bler_estimator,wall_s"
        );
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn paired_cells_share_their_noise() {
        let spec = spec_8_4();
        let base = SweepConfig {
            stop: StopRule {
                target_errors: 40,
                max_samples: 30_000,
            },
            seed: 4,
            paired: true,
            collect_outcomes: true,
            ..SweepConfig::new(
                vec![spec.clone()],
                vec![ChannelModel::Bsc { p: 0.08 }],
                SweepDecoder::Sc,
            )
        };
        let sc = run_bler_sweep(&base).unwrap();
        let mut scl_config = base.clone();
        scl_config.decoder = SweepDecoder::Scl {
            list_size: 1,
            crc_aided: false,
        };
        let scl = run_bler_sweep(&scl_config).unwrap();
        // A list of one replays SC decisions, so on shared noise the
        // per-trial outcomes must agree exactly.
        assert_eq!(sc[0].outcomes, scl[0].outcomes);
        let cmp = paired_significance(
            sc[0].outcomes.as_ref().unwrap(),
            scl[0].outcomes.as_ref().unwrap(),
        );
        assert_eq!((cmp.n01, cmp.n10), (0, 0));
        assert_eq!(cmp.z, 0.0);
    }

    #[test]
    fn paired_sweep_rejects_mixed_block_lengths() {
        let config = SweepConfig {
            paired: true,
            ..SweepConfig::new(
                vec![spec_8_4(), CodeSpec::new(16, 8, (9..=16).collect()).unwrap()],
                vec![ChannelModel::Bsc { p: 0.1 }],
                SweepDecoder::Sc,
            )
        };
        assert!(run_bler_sweep(&config).is_err());
    }

    #[test]
    fn discordant_pairs_are_counted_by_direction() {
        let a = [true, false, false, true, true];
        let b = [false, false, true, true, true];
        let cmp = paired_significance(&a, &b);
        assert_eq!(cmp.trials, 5);
        assert_eq!(cmp.n01, 1);
        assert_eq!(cmp.n10, 1);
        assert_eq!(cmp.z, 0.0);
        let shorter = paired_significance(&a[..2], &b);
        assert_eq!(shorter.trials, 2);
    }

    #[test]
    fn flip_decoder_rows_leave_the_estimator_column_empty() {
        let config = SweepConfig {
            stop: StopRule {
                target_errors: 10,
                max_samples: 4_000,
            },
            seed: 2,
            random_payload: true,
            ..SweepConfig::new(
                vec![crc_spec_32()],
                vec![ChannelModel::Bsc { p: 0.06 }],
                SweepDecoder::Dscf {
                    attempts: 4,
                    alpha: 0.3367,
                    gamma: None,
                },
            )
        };
        let rows = run_bler_sweep(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].bler_estimator.is_none());
        assert!(rows[0].samples > 0);
        let csv = sweep_to_csv(&rows);
        let data = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = data.split(',').collect();
        assert_eq!(fields[3], "dscf");
        assert_eq!(fields[8], "");

        let again = run_bler_sweep(&config).unwrap();
        assert_eq!(rows[0].errors, again[0].errors);
        assert_eq!(rows[0].samples, again[0].samples);
    }

    #[test]
    fn gamma_pilot_restricts_candidates_without_breaking_decoding() {
        let config = SweepConfig {
            stop: StopRule {
                target_errors: 10,
                max_samples: 4_000,
            },
            seed: 6,
            random_payload: true,
            ..SweepConfig::new(
                vec![crc_spec_32()],
                vec![ChannelModel::Bsc { p: 0.06 }],
                SweepDecoder::Dscf {
                    attempts: 4,
                    alpha: 0.3367,
                    gamma: Some(1e-4),
                },
            )
        };
        let rows = run_bler_sweep(&config).unwrap();
        assert!(rows[0].samples > 0);
    }

    #[test]
    fn bitmap_lays_positions_out_column_major() {
        let rate1 = CodeSpec::new(8, 8, (1..=8).collect()).unwrap();
        let export = export_bit_distribution(std::slice::from_ref(&rate1), 4).unwrap();
        let grid: Vec<&str> = export.text.lines().skip(1).take(4).collect();
        assert_eq!(grid, vec!["1,1", "1,1", "1,1", "1,1"]);
        assert!(export.diffs.is_empty());

        let export = export_bit_distribution(&[spec_8_4()], 4).unwrap();
        // Position c*4 + r + 1: column 0 holds 1..=4, column 1 holds 5..=8.
        let grid: Vec<&str> = export.text.lines().skip(1).take(4).collect();
        assert_eq!(grid, vec!["0,0", "0,1", "0,1", "1,1"]);
    }

    #[test]
    fn bitmap_diffs_are_set_differences() {
        let a = spec_8_4();
        let b = CodeSpec::new(8, 4, vec![3, 5, 7, 8]).unwrap();
        let export = export_bit_distribution(&[a.clone(), b], 2).unwrap();
        assert_eq!(export.diffs.len(), 1);
        assert_eq!(export.diffs[0].only_first, vec![4, 6]);
        assert_eq!(export.diffs[0].only_second, vec![3, 5]);

        let same = export_bit_distribution(&[a.clone(), a], 2).unwrap();
        assert!(same.diffs[0].only_first.is_empty());
        assert!(same.diffs[0].only_second.is_empty());
    }

    #[test]
    fn bitmap_rejects_bad_shapes() {
        assert!(export_bit_distribution(&[], 2).is_err());
        assert!(export_bit_distribution(&[spec_8_4()], 3).is_err());
    }

    #[test]
    fn profile_csv_carries_a_json_header() {
        let summary = ProfileSummary {
            info_set: vec![4, 6],
            estimates: vec![0.25, 0.125],
            variances: vec![1e-6, 2e-6],
            samples: 512,
            errors: 100,
            estimator_bler: 0.375,
            mc_bler: 0.1953125,
        };
        let csv = profile_to_csv(&summary);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# {"));
        assert!(header.contains("\"samples\":512"));
        assert_eq!(lines.next().unwrap(), "index,estimate,variance,n");
        assert_eq!(lines.next().unwrap(), "4,0.25,0.000001,512");
    }

    #[test]
    fn comparison_wraps_convergence_with_an_exact_reference() {
        let spec = spec_8_4();
        let channel = ChannelModel::Bsc { p: 0.1 };
        let options = EstimateOptions {
            seed: 1,
            ..EstimateOptions::default()
        };
        let report =
            run_estimator_comparison(&spec, &channel, &options, &[100, 200], 2, true).unwrap();
        assert_eq!(report.convergence.runs.len(), 2);
        let reference = report.reference.unwrap();
        assert_eq!(reference.outputs, 256);
        assert!(reference.estimator_bler > 0.0);
        let csv = comparison_to_csv(&ComparisonReport {
            convergence: report.convergence,
            reference: Some(reference),
        });
        assert!(csv.starts_with("# {"));
        assert!(csv.contains("samples,estimator_mean,estimator_std,mc_mean,mc_std"));
    }

    #[test]
    fn worker_pool_honors_an_explicit_count() {
        let pool = worker_pool(Some(3)).unwrap();
        assert_eq!(pool.install(rayon::current_num_threads), 3);
    }
}
