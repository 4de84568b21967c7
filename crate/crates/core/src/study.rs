//! The ordinary-versus-universal kriging comparison: for each true order,
//! simulate a field, split it 90/10, then predict the held-out part twice.
//! Universal kriging estimates `kappa` from the criterion; ordinary kriging
//! fixes `kappa = 1`. Both fit `r` by weighted least squares; by default the
//! universal fit uses the leading lobe and the ordinary fit every bin.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::empirical::{criterion, select_kappa_with, CriterionTable, Dataset, LagGrid, SelectionRule};
use crate::error::Result;
use crate::fitting::{fit_r_with, BinSelection};
use crate::icf::IcfModel;
use crate::kriging::{rmse, KrigingModel};
use crate::rng::derive_seed;
use crate::simulate::{simulate_field, train_test_split, Simulation, SimulationConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub seed: u64,
    pub n: usize,
    pub r: f64,
    pub kappas: Vec<usize>,
    pub train_fraction: f64,
    pub bins: usize,
    pub j_max: usize,
    pub threshold: f64,
    pub sigma2: f64,
    pub rule: SelectionRule,
    /// Bins entering the fit at the estimated order.
    pub uk_fit_bins: BinSelection,
    /// Bins entering the fit at `kappa = 1`.
    pub ok_fit_bins: BinSelection,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n: 1500,
            r: 0.75,
            kappas: vec![2, 3],
            train_fraction: 0.9,
            bins: crate::empirical::DEFAULT_BINS,
            j_max: crate::empirical::DEFAULT_JMAX,
            threshold: crate::empirical::DEFAULT_THRESHOLD,
            sigma2: 0.0,
            rule: SelectionRule::default(),
            uk_fit_bins: BinSelection::LeadingLobe,
            ok_fit_bins: BinSelection::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Universal,
    Ordinary,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Universal => "UK",
            Method::Ordinary => "OK",
        }
    }
}

/// One row of the comparison table. `error` is set when a stage failed, in
/// which case the later fields are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub true_kappa: usize,
    pub method: Method,
    pub kappa: Option<usize>,
    pub r_hat: Option<f64>,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

/// Simulated data behind one true order.
#[derive(Clone, Debug)]
pub struct StudyData {
    pub true_kappa: usize,
    pub simulation: Simulation<f64>,
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub cells: Vec<CellResult>,
    /// Criterion table of each training set, or the error that prevented it.
    pub criteria: Vec<(usize, std::result::Result<CriterionTable<f64>, String>)>,
}

impl StudyReport {
    pub fn cell(&self, true_kappa: usize, method: Method) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.true_kappa == true_kappa && c.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true_kappa,method,kappa,r_hat,rmse,error\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.true_kappa,
                c.method.label(),
                c.kappa.map(|k| k.to_string()).unwrap_or_default(),
                opt(c.r_hat),
                opt(c.rmse),
                c.error.as_deref().map(csv_quote).unwrap_or_default()
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| True kappa | Method | kappa | r_hat | RMSE |\n|---|---|---|---|---|\n");
        for c in &self.cells {
            let fmt = |v: Option<f64>, digits: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"));
            let _ = write!(
                s,
                "| {} | {} | {} | {} | {} |",
                c.true_kappa,
                c.method.label(),
                c.kappa.map_or_else(|| "-".to_string(), |k| k.to_string()),
                fmt(c.r_hat, 3),
                fmt(c.rmse, 2)
            );
            if let Some(e) = &c.error {
                let _ = write!(s, " error: {e}");
            }
            s.push('\n');
        }
        s
    }
}

fn csv_quote(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

/// Seed of the simulation behind true order `kappa`.
pub fn data_seed(seed: u64, kappa: usize) -> u64 {
    derive_seed(seed, kappa as u64)
}

/// Simulates and splits the data for true order `kappa`.
pub fn study_data(config: &StudyConfig, kappa: usize) -> Result<StudyData> {
    let seed = data_seed(config.seed, kappa);
    let simulation = simulate_field(&SimulationConfig::new(kappa, config.r, config.n, seed))?;
    let (train, test) = train_test_split(&simulation.data, config.train_fraction, seed)?;
    let train = train.with_sigma2(config.sigma2)?;
    Ok(StudyData { true_kappa: kappa, simulation, train, test })
}

/// Fits `r` at `kappa` and predicts the held-out observations.
fn predict_cell(table: &CriterionTable<f64>, data: &StudyData, kappa: usize, bins: BinSelection) -> (Option<f64>, Result<f64>) {
    let fit = match table.profile(kappa).and_then(|p| fit_r_with(&p, bins)) {
        Ok(f) => f,
        Err(e) => return (None, Err(e)),
    };
    let result = IcfModel::new(kappa, fit.r_hat)
        .and_then(|icf| KrigingModel::new(data.train.clone(), icf))
        .and_then(|model| model.predict(data.test.points()))
        .and_then(|pred| rmse(&pred, data.test.values()));
    (Some(fit.r_hat), result)
}

fn run_kappa(config: &StudyConfig, true_kappa: usize) -> (Vec<CellResult>, std::result::Result<CriterionTable<f64>, String>) {
    let failed = |method, kappa, e: String| CellResult { true_kappa, method, kappa, r_hat: None, rmse: None, error: Some(e) };
    let prepared = study_data(config, true_kappa).and_then(|data| {
        let table = criterion(&data.train, &LagGrid::uniform(config.bins)?, config.j_max)?;
        Ok((data, table))
    });
    let (data, table) = match prepared {
        Ok(v) => v,
        Err(e) => {
            log::error!("true kappa {true_kappa}: {e}");
            let msg = e.to_string();
            return (
                vec![failed(Method::Universal, None, msg.clone()), failed(Method::Ordinary, Some(1), msg.clone())],
                Err(msg),
            );
        }
    };

    let mut cells = Vec::with_capacity(2);
    for method in [Method::Universal, Method::Ordinary] {
        let (kappa, bins) = match method {
            Method::Ordinary => (Ok(1), config.ok_fit_bins),
            Method::Universal => (select_kappa_with(&table, config.threshold, config.rule).map(|e| e.kappa), config.uk_fit_bins),
        };
        let cell = match kappa {
            Err(e) => failed(method, None, e.to_string()),
            Ok(kappa) => match predict_cell(&table, &data, kappa, bins) {
                (r_hat, Ok(rmse)) => CellResult { true_kappa, method, kappa: Some(kappa), r_hat, rmse: Some(rmse), error: None },
                (r_hat, Err(e)) => {
                    log::error!("true kappa {true_kappa}, {}: {e}", method.label());
                    CellResult { r_hat, ..failed(method, Some(kappa), e.to_string()) }
                }
            },
        };
        cells.push(cell);
    }
    (cells, Ok(table))
}

/// Runs every cell; a failing stage is recorded in its cell and the other
/// cells still run.
pub fn run_study(config: &StudyConfig) -> StudyReport {
    let mut cells = Vec::new();
    let mut criteria = Vec::new();
    for &kappa in &config.kappas {
        log::info!("study: true kappa {kappa}");
        let (c, table) = run_kappa(config, kappa);
        cells.extend(c);
        criteria.push((kappa, table));
    }
    StudyReport { cells, criteria }
}
