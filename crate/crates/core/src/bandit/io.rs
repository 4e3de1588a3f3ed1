//! CSV wire formats for logged datasets, cross-propensity matrices and
//! tabular target weights.

use std::io::{Read, Write};
use std::path::Path;

use super::dataset::{CrossPropensityMatrix, LoggedDataset, Observation};
use super::target::TargetFunctional;
use crate::error::{OpeError, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const CROSS_FILE: &str = "cross.csv";

fn parse_f64(field: &str, line: u64, col: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| OpeError::Data(format!("line {line}: column `{col}`: cannot parse `{field}`")))
}

fn parse_usize(field: &str, line: u64, col: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| OpeError::Data(format!("line {line}: column `{col}`: cannot parse `{field}`")))
}

/// Rows of a logged-dataset CSV: observations, logged propensities, context dimension.
pub struct DatasetRows {
    pub observations: Vec<Observation>,
    pub logged: Vec<f64>,
    pub dim: usize,
}

/// Reads `t,x1,...,xd,a,y,g_logged`.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<DatasetRows> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n = headers.len();
    let expected_tail = ["a", "y", "g_logged"];
    if n < 4 || headers.get(0) != Some("t") || (0..3).any(|i| headers.get(n - 3 + i) != Some(expected_tail[i])) {
        return Err(OpeError::Data(format!(
            "dataset header must be `t,x1,...,xd,a,y,g_logged`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let dim = n - 4;
    for (j, h) in headers.iter().skip(1).take(dim).enumerate() {
        if h != format!("x{}", j + 1) {
            return Err(OpeError::Data(format!(
                "dataset header column {} should be `x{}`, found `{h}`",
                j + 2,
                j + 1
            )));
        }
    }
    let mut observations = Vec::new();
    let mut logged = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n {
            return Err(OpeError::Data(format!(
                "line {line}: expected {n} fields, found {}",
                rec.len()
            )));
        }
        let round = parse_usize(&rec[0], line, "t")?;
        let context = (0..dim)
            .map(|j| parse_f64(&rec[j + 1], line, &headers[j + 1]))
            .collect::<Result<Vec<_>>>()?;
        let arm = parse_usize(&rec[n - 3], line, "a")?;
        let reward = parse_f64(&rec[n - 2], line, "y")?;
        logged.push(parse_f64(&rec[n - 1], line, "g_logged")?);
        if let Some(prev) = observations.last().map(|o: &Observation| o.round) {
            if round <= prev {
                return Err(OpeError::Data(format!(
                    "line {line}: t={round} not strictly increasing"
                )));
            }
        }
        observations.push(Observation {
            round,
            context,
            arm,
            reward,
        });
    }
    if observations.is_empty() {
        return Err(OpeError::Empty("dataset"));
    }
    Ok(DatasetRows {
        observations,
        logged,
        dim,
    })
}

/// Reads `t,s,g_t_at_s` rows into a matrix over `rounds` rounds.
pub fn read_cross_csv<R: Read>(reader: R, rounds: usize) -> Result<CrossPropensityMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "s", "g_t_at_s"] {
        return Err(OpeError::Data("cross-propensity header must be `t,s,g_t_at_s`".into()));
    }
    let mut m = CrossPropensityMatrix::empty(rounds);
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(OpeError::Data(format!("line {line}: expected 3 fields")));
        }
        let t = parse_usize(&rec[0], line, "t")?;
        let s = parse_usize(&rec[1], line, "s")?;
        let v = parse_f64(&rec[2], line, "g_t_at_s")?;
        m.set(t, s, v)
            .map_err(|e| OpeError::Data(format!("line {line}: {e}")))?;
    }
    Ok(m)
}

/// Loads `dataset.csv` and `cross.csv`. The arm count defaults to the largest logged arm.
pub fn load_dataset(dataset: &Path, cross: &Path, arms: Option<usize>) -> Result<LoggedDataset> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| OpeError::Data(format!("{}: {e}", p.display())));
    let rows = read_dataset_csv(std::io::BufReader::new(open(dataset)?))?;
    let matrix = read_cross_csv(std::io::BufReader::new(open(cross)?), rows.observations.len())?;
    let arms = arms.unwrap_or_else(|| rows.observations.iter().map(|o| o.arm).max().unwrap_or(1));
    Ok(LoggedDataset::from_matrix(
        arms,
        rows.dim,
        rows.observations,
        rows.logged,
        matrix,
    ))
}

pub fn write_dataset_csv<W: Write>(ds: &LoggedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=ds.dim()).map(|j| format!("x{j}")));
    header.extend(["a", "y", "g_logged"].map(String::from));
    w.write_record(&header)?;
    for (o, g) in ds.observations().iter().zip(ds.logged_propensities()) {
        let mut rec = vec![o.round.to_string()];
        rec.extend(o.context.iter().map(|v| v.to_string()));
        rec.push(o.arm.to_string());
        rec.push(o.reward.to_string());
        rec.push(g.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cross_csv<W: Write>(matrix: &CrossPropensityMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "s", "g_t_at_s"])?;
    for t in 1..=matrix.rounds() {
        for (j, v) in matrix.row(t).iter().enumerate() {
            if !v.is_nan() {
                w.write_record([t.to_string(), (j + 1).to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `dataset.csv` and `cross.csv` into `dir`.
pub fn save_dataset(ds: &LoggedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let matrix = ds.cross_matrix()?;
    write_dataset_csv(
        ds,
        std::io::BufWriter::new(std::fs::File::create(dir.join(DATASET_FILE))?),
    )?;
    write_cross_csv(
        &matrix,
        std::io::BufWriter::new(std::fs::File::create(dir.join(CROSS_FILE))?),
    )?;
    Ok(())
}

/// Reads a non-contextual target from `arm,weight` rows. Unlisted arms get weight 0.
pub fn read_target_weights_csv<R: Read>(reader: R, arms: usize) -> Result<TargetFunctional> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["arm", "weight"] {
        return Err(OpeError::Data("target weights header must be `arm,weight`".into()));
    }
    let mut weights = vec![0.0; arms];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let arm = parse_usize(&rec[0], line, "arm")?;
        if arm == 0 || arm > arms {
            return Err(OpeError::Data(format!("line {line}: arm {arm} outside 1..={arms}")));
        }
        weights[arm - 1] = parse_f64(&rec[1], line, "weight")?;
    }
    Ok(TargetFunctional::Weights { weights })
}
