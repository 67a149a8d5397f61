//! Experiment drivers behind the command line: each takes a parameter set,
//! runs the corresponding solver or simulation and renders a CSV table
//! preceded by a `#` line recording the full configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cake::{
    check_fairness, exact_partition, expected_truthful_value, measure_value, simulate, PiecewiseMeasure,
};
use crate::commitment::{commit_rows, instance, InstanceKind, DEFAULT_X_MAX};
use crate::dist::ValueDistribution;
use crate::equilibrium::{price_of_anarchy, reward_game_pure_equilibrium};
use crate::error::{Error, Result};
use crate::game::{verify_sybilproof, ActionSpace, AggregativeGame, SybilCost, SybilVerdict};
use crate::rdm::{check_rdm_sybilproof, welfare_rows, DsicProRata, RewardMechanism, DEFAULT_CHECK_BOUND};
use crate::ring::{opt_ring_search, second_price_game, ShareFamily};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            seed: 0,
            output: None,
            format: OutputFormat::Csv,
            experiment,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Header comment: version and every parameter except the output path.
    pub fn header(&self) -> String {
        let mut recorded = self.clone();
        recorded.output = None;
        let json = serde_json::to_string(&recorded).expect("config serialises");
        format!("# sybil-lab {VERSION} config={json}\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Experiment {
    Verify(VerifyParams),
    Rdm(RdmParams),
    Cake(CakeParams),
    Ring(RingParams),
    Commit(CommitParams),
    Poa(PoaParams),
    Figure(FigureParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyGame {
    /// Reward split evenly among participating identities.
    Participation,
    /// Reward split in proportion to integer actions.
    Proportional,
    /// Proportional reward minus a linear action cost.
    Reward,
    Cournot,
    SecondPrice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyParams {
    pub game: VerifyGame,
    pub reward: f64,
    /// Action cost of the reward game, demand intercept of Cournot, value in the auction.
    pub c: f64,
    pub identity_cost: f64,
    pub max_identities: usize,
    pub foreign: Vec<f64>,
    pub search_upper: Option<f64>,
    pub grid_step: Option<f64>,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            game: VerifyGame::Participation,
            reward: 10.0,
            c: 1.0,
            identity_cost: 0.0,
            max_identities: 2,
            foreign: vec![1.0, 1.0, 1.0],
            search_upper: None,
            grid_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdmParams {
    pub reward: f64,
    pub n_max: usize,
    pub k: f64,
    pub epsilon: f64,
}

impl Default for RdmParams {
    fn default() -> Self {
        Self {
            reward: 10.0,
            n_max: 12,
            k: 1.0,
            epsilon: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CakeParams {
    /// Number of identities with uniform valuations; ignored when `measures` is set.
    pub n: usize,
    pub measures: Option<PathBuf>,
    pub samples: usize,
    /// Emit per-identity averages instead of one row per run and identity.
    pub summary: bool,
}

impl Default for CakeParams {
    fn default() -> Self {
        Self {
            n: 3,
            measures: None,
            samples: 10_000,
            summary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingParams {
    pub dist: String,
    pub n: usize,
    /// Number of evenly spaced `θ` values in `[0, 1]`.
    pub theta_grid: usize,
    pub family: ShareFamily,
    pub samples: usize,
    pub reserve: f64,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            dist: "uniform".into(),
            n: 3,
            theta_grid: 21,
            family: ShareFamily::Constant,
            samples: 100_000,
            reserve: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitParams {
    pub instance: InstanceKind,
    pub c: f64,
    pub n_max: usize,
    pub x_max: usize,
}

impl Default for CommitParams {
    fn default() -> Self {
        Self {
            instance: InstanceKind::Cournot,
            c: 0.0,
            n_max: 10,
            x_max: DEFAULT_X_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoaGame {
    Reward,
    Cournot,
    Dsic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoaParams {
    pub game: PoaGame,
    pub reward: f64,
    pub c: f64,
    pub k: f64,
    pub n_max: usize,
    pub grid_step: f64,
}

impl Default for PoaParams {
    fn default() -> Self {
        Self {
            game: PoaGame::Reward,
            reward: 10.0,
            c: 1.0,
            k: 1.0,
            n_max: 10,
            grid_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureParams {
    pub which: Figure,
    pub reward: f64,
    pub k: f64,
    pub epsilon: f64,
    pub n_max: usize,
    pub instance: InstanceKind,
    pub c: f64,
}

impl Default for FigureParams {
    fn default() -> Self {
        Self {
            which: Figure::Fig1,
            reward: 10.0,
            k: 1.0,
            epsilon: 0.01,
            n_max: 12,
            instance: InstanceKind::Cfmm,
            c: 0.0,
        }
    }
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new() -> Self {
        Self {
            writer: csv::Writer::from_writer(Vec::new()),
        }
    }

    fn row<S: Serialize>(&mut self, row: S) -> Result<()> {
        self.writer
            .serialize(row)
            .map_err(|e| Error::Config(format!("cannot write CSV row: {e}")))
    }

    fn finish(self) -> Result<String> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| Error::Config(format!("cannot flush CSV: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

/// Runs the experiment and returns the header line followed by the CSV table.
pub fn run(config: &ExperimentConfig) -> Result<String> {
    let body = match &config.experiment {
        Experiment::Verify(p) => run_verify(p)?,
        Experiment::Rdm(p) => run_rdm(p)?,
        Experiment::Cake(p) => run_cake(p, config.seed)?,
        Experiment::Ring(p) => run_ring(p, config.seed)?,
        Experiment::Commit(p) => run_commit(p)?,
        Experiment::Poa(p) => run_poa(p)?,
        Experiment::Figure(p) => run_figure(p)?,
    };
    Ok(config.header() + &body)
}

#[derive(Serialize)]
struct VerifyRow {
    game: String,
    foreign: String,
    verdict: &'static str,
    mine: String,
    sybil_payoff: Option<f64>,
    single_payoff: Option<f64>,
    gain: Option<f64>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn run_verify(p: &VerifyParams) -> Result<String> {
    let step = p.grid_step;
    let game = match p.game {
        VerifyGame::Participation => AggregativeGame::participation(p.reward),
        VerifyGame::Proportional => AggregativeGame::proportional_share(p.reward, ActionSpace::integer(0, None)?),
        VerifyGame::Reward => AggregativeGame::reward_game(p.reward, p.c, step.unwrap_or(0.1))?,
        VerifyGame::Cournot => AggregativeGame::cournot(p.c, step.unwrap_or(0.05))?,
        VerifyGame::SecondPrice => second_price_game(p.c, step.unwrap_or(0.05))?,
    };
    let natural_upper = match p.game {
        VerifyGame::Participation | VerifyGame::Proportional => None,
        VerifyGame::Reward => Some(p.reward / p.c),
        VerifyGame::Cournot => Some(p.c),
        VerifyGame::SecondPrice => Some(2.0 * p.c.max(p.foreign.iter().cloned().fold(0.0, f64::max))),
    };
    let cost = SybilCost::linear(p.identity_cost)?;
    let upper = p.search_upper.or(natural_upper);
    let verdict = verify_sybilproof(&game, &cost, p.max_identities, std::slice::from_ref(&p.foreign), upper)?;
    let row = match verdict {
        SybilVerdict::Proof { .. } => VerifyRow {
            game: game.name().into(),
            foreign: join(&p.foreign),
            verdict: "proof",
            mine: String::new(),
            sybil_payoff: None,
            single_payoff: None,
            gain: None,
        },
        SybilVerdict::Counterexample(c) => VerifyRow {
            game: game.name().into(),
            foreign: join(&p.foreign),
            verdict: "counterexample",
            mine: join(&c.mine),
            sybil_payoff: Some(c.sybil_payoff),
            single_payoff: Some(c.single_payoff),
            gain: Some(c.gain),
        },
    };
    let mut table = Table::new();
    table.row(row)?;
    table.finish()
}

fn run_rdm(p: &RdmParams) -> Result<String> {
    let mut table = Table::new();
    for row in welfare_rows(p.reward, p.k, p.epsilon, p.n_max)? {
        table.row(row)?;
    }
    let bound = DEFAULT_CHECK_BOUND.max(p.n_max);
    if !check_rdm_sybilproof(&RewardMechanism::rmax(p.reward), bound, bound)?.is_proof() {
        return Err(Error::InvariantViolation(
            "r_max failed the Sybil-proofness check".into(),
        ));
    }
    table.finish()
}

#[derive(Serialize)]
struct CakeRunRow {
    run: usize,
    identity: usize,
    value: f64,
    coin: &'static str,
}

#[derive(Serialize)]
struct CakeSummaryRow {
    identity: usize,
    mean_value: f64,
    standard_error: f64,
    allocation_frequency: f64,
    expected_value: f64,
}

/// Largest allowed deviation of a partition piece from `1/n`.
const PARTITION_TOL: f64 = 1e-12;

fn run_cake(p: &CakeParams, seed: u64) -> Result<String> {
    let measures = match &p.measures {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            PiecewiseMeasure::parse_file(&text)?
        }
        None => vec![PiecewiseMeasure::uniform(); p.n],
    };
    let n = measures.len();
    if n == 0 {
        return Err(Error::Config("cake needs at least one measure".into()));
    }
    let partition = exact_partition(&measures, n)?;
    for (i, mu) in measures.iter().enumerate() {
        for (j, s) in partition.iter().enumerate() {
            let v = measure_value(mu, s);
            if (v - 1.0 / n as f64).abs() > PARTITION_TOL {
                return Err(Error::InvariantViolation(format!(
                    "measure {i} values piece {j} at {v}, not 1/{n}"
                )));
            }
        }
    }
    let transcript = simulate(&measures, p.samples, seed)?;
    let mut table = Table::new();
    if p.summary {
        let report = check_fairness(&transcript, &measures)?;
        let kept = transcript
            .draws
            .iter()
            .filter(|d| d.coin == crate::cake::Coin::Kept)
            .count();
        for i in 0..n {
            table.row(CakeSummaryRow {
                identity: i,
                mean_value: report.mean_values[i],
                standard_error: report.standard_errors[i],
                allocation_frequency: kept as f64 / p.samples as f64,
                expected_value: expected_truthful_value(n),
            })?;
        }
    } else {
        for run in 0..transcript.draws.len() {
            let allocation = transcript.allocation(run);
            for (i, slice) in allocation.slices.iter().enumerate() {
                table.row(CakeRunRow {
                    run,
                    identity: i,
                    value: measure_value(&measures[i], slice),
                    coin: allocation.coin.as_str(),
                })?;
            }
        }
    }
    table.finish()
}

#[derive(Serialize)]
struct RingRow {
    theta: f64,
    truthful_ok: bool,
    sybilproof_ok: bool,
    welfare: f64,
    baseline: f64,
}

fn run_ring(p: &RingParams, seed: u64) -> Result<String> {
    let dist: ValueDistribution = p.dist.parse()?;
    if p.theta_grid < 2 {
        return Err(Error::Config("theta grid needs at least 2 points".into()));
    }
    let thetas: Vec<f64> = (0..p.theta_grid)
        .map(|i| i as f64 / (p.theta_grid - 1) as f64)
        .collect();
    let search = opt_ring_search(&dist, p.n, p.family, &thetas, p.reserve, p.samples, seed)?;
    if let Some(w) = &search.warning {
        eprintln!("warning: {w}");
    }
    let mut table = Table::new();
    for c in &search.candidates {
        table.row(RingRow {
            theta: c.theta,
            truthful_ok: c.truthful_ok,
            sybilproof_ok: c.sybilproof_ok,
            welfare: c.welfare,
            baseline: c.baseline,
        })?;
    }
    table.finish()
}

#[derive(Serialize)]
struct CommitCsvRow {
    n: usize,
    eq_payoff: f64,
    commit2_payoff: f64,
    scp_verdict: String,
}

fn run_commit(p: &CommitParams) -> Result<String> {
    let inst = instance(p.instance, p.c)?;
    if let Some(w) = inst.oracle.warning() {
        eprintln!("warning: {w}");
    }
    let mut table = Table::new();
    for row in commit_rows(&inst, p.n_max, p.x_max) {
        table.row(CommitCsvRow {
            n: row.n,
            eq_payoff: row.eq_payoff,
            commit2_payoff: row.commit2_payoff,
            scp_verdict: row.scp_verdict.to_string(),
        })?;
    }
    table.finish()
}

#[derive(Serialize)]
struct PoaRow {
    n: usize,
    eq_welfare: f64,
    opt_welfare: f64,
    poa: f64,
    grid_step: f64,
}

fn run_poa(p: &PoaParams) -> Result<String> {
    let (game, upper, first_n) = match p.game {
        PoaGame::Reward => (
            AggregativeGame::reward_game(p.reward, p.c, p.grid_step)?,
            p.reward / p.c,
            2,
        ),
        PoaGame::Cournot => (AggregativeGame::cournot(p.c, p.grid_step)?, p.c, 1),
        PoaGame::Dsic => (DsicProRata::new(p.reward, p.k)?.game(p.grid_step)?, 2.0 * p.k, 1),
    };
    let mut table = Table::new();
    for n in first_n..=p.n_max {
        let nf = n as f64;
        let eq_welfare = match p.game {
            PoaGame::Reward => reward_game_pure_equilibrium(p.reward, p.c, n)?.welfare,
            PoaGame::Cournot => nf * p.c * p.c / ((nf + 1.0) * (nf + 1.0)),
            PoaGame::Dsic => DsicProRata::new(p.reward, p.k)?.welfare(n),
        };
        let est = price_of_anarchy(&game, n, eq_welfare, Some(upper))?;
        table.row(PoaRow {
            n,
            eq_welfare,
            opt_welfare: est.optimal_welfare,
            poa: est.ratio,
            grid_step: est.grid_step,
        })?;
    }
    table.finish()
}

#[derive(Serialize)]
struct Fig1Row {
    n: usize,
    rmax_welfare: f64,
    dsic_welfare: f64,
    tent_welfare: f64,
}

#[derive(Serialize)]
struct Fig2Row {
    n: usize,
    eq_payoff: f64,
    sybil_commit_payoff: f64,
}

fn run_figure(p: &FigureParams) -> Result<String> {
    let mut table = Table::new();
    match p.which {
        Figure::Fig1 => {
            for row in welfare_rows(p.reward, p.k, p.epsilon, p.n_max)? {
                table.row(Fig1Row {
                    n: row.n,
                    rmax_welfare: row.r_max,
                    dsic_welfare: row.welfare_dsic,
                    tent_welfare: row.welfare_tent,
                })?;
            }
        }
        Figure::Fig2 => {
            let inst = instance(p.instance, p.c)?;
            for n in 1..=p.n_max {
                table.row(Fig2Row {
                    n,
                    eq_payoff: inst.oracle.payoff(n),
                    sybil_commit_payoff: 2.0 * inst.oracle.payoff(n + 1),
                })?;
            }
        }
    }
    table.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(text: &str) -> Vec<&str> {
        text.lines().skip(1).collect()
    }

    #[test]
    fn rdm_table_has_rmax_column() {
        let out = run(&ExperimentConfig::new(Experiment::Rdm(RdmParams::default()))).unwrap();
        assert!(out.starts_with("# sybil-lab "));
        let lines = body(&out);
        assert_eq!(lines[0], "n,r_max,welfare_dsic,welfare_tent");
        assert!(lines[3].starts_with("3,7.5,"));
    }

    #[test]
    fn fig1_first_row_is_all_reward() {
        let out = run(&ExperimentConfig::new(Experiment::Figure(FigureParams::default()))).unwrap();
        let lines = body(&out);
        assert_eq!(lines[0], "n,rmax_welfare,dsic_welfare,tent_welfare");
        let first: Vec<f64> = lines[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        for v in first {
            assert!((v - 10.0).abs() < 1e-9);
        }
        assert!(lines[4].starts_with("4,5.0,"));
    }

    #[test]
    fn commit_table_marks_the_cournot_counterexample() {
        let out = run(&ExperimentConfig::new(Experiment::Commit(CommitParams::default()))).unwrap();
        let lines = body(&out);
        assert_eq!(lines[0], "n,eq_payoff,commit2_payoff,scp_verdict");
        assert!(lines[1].ends_with(",scp"));
        assert!(lines[2].ends_with(",counterexample:foreign=1;x=2"));
    }

    #[test]
    fn verify_reports_the_participation_counterexample() {
        let out = run(&ExperimentConfig::new(Experiment::Verify(VerifyParams::default()))).unwrap();
        let lines = body(&out);
        assert_eq!(lines[1], "participation,1;1;1,counterexample,1;1,4.0,2.5,1.5");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = "seed = 7\n[experiment]\nkind = \"cake\"\nn = 4\nsamples = 20000\nsummary = true\n";
        let config = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(config.seed, 7);
        match &config.experiment {
            Experiment::Cake(p) => assert_eq!((p.n, p.samples, p.summary), (4, 20_000, true)),
            e => panic!("unexpected {e:?}"),
        }
        let out = run(&config).unwrap();
        let lines = body(&out);
        let freq: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
        assert!((freq - 0.5).abs() < 0.01);
    }

    #[test]
    fn header_omits_output_path() {
        let mut config = ExperimentConfig::new(Experiment::Rdm(RdmParams::default()));
        let plain = config.header();
        config.output = Some("somewhere.csv".into());
        assert_eq!(config.header(), plain);
    }

    #[test]
    fn bad_parameters_are_config_or_domain_errors() {
        let p = RingParams {
            dist: "normal".into(),
            ..Default::default()
        };
        let err = run(&ExperimentConfig::new(Experiment::Ring(p))).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::from_toml("[experiment]\nkind = \"nope\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
