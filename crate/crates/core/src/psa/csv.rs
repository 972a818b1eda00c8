//! PSA CSV format.
//!
//! Header cells are `param:<name>`, then either `nb:<treatment>` columns or
//! paired `effect:<treatment>` / `cost:<treatment>` columns. One row per
//! simulation, plain decimal numbers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{PsaSample, WillingnessToPay};
use crate::error::{EvppiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Param,
    Nb,
    Effect,
    Cost,
}

struct Column {
    kind: ColumnKind,
    name: String,
}

fn parse_header(index: usize, cell: &str) -> Result<Column> {
    let (prefix, name) = cell.split_once(':').ok_or_else(|| {
        EvppiError::Parse(format!(
            "column {} header `{cell}`: expected `param:`, `nb:`, `effect:` or `cost:` prefix",
            index + 1
        ))
    })?;
    let kind = match prefix.trim() {
        "param" => ColumnKind::Param,
        "nb" => ColumnKind::Nb,
        "effect" => ColumnKind::Effect,
        "cost" => ColumnKind::Cost,
        other => {
            return Err(EvppiError::Parse(format!(
                "column {} header `{cell}`: unknown prefix `{other}`",
                index + 1
            )))
        }
    };
    let name = name.trim();
    if name.is_empty() {
        return Err(EvppiError::Parse(format!(
            "column {} header `{cell}`: empty name",
            index + 1
        )));
    }
    Ok(Column {
        kind,
        name: name.to_string(),
    })
}

/// Reads a PSA table. `wtp` is used only when the file carries effects and
/// costs instead of net benefit.
pub fn read_psa_csv<R: Read>(reader: R, wtp: WillingnessToPay) -> Result<PsaSample> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvppiError::Parse(format!("reading header: {e}")))?
        .clone();
    let columns = headers
        .iter()
        .enumerate()
        .map(|(i, h)| parse_header(i, h))
        .collect::<Result<Vec<_>>>()?;

    let names_of = |kind: ColumnKind| -> Vec<String> {
        columns
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.clone())
            .collect()
    };
    let param_names = names_of(ColumnKind::Param);
    let nb_names = names_of(ColumnKind::Nb);
    let effect_names = names_of(ColumnKind::Effect);
    let cost_names = names_of(ColumnKind::Cost);

    if param_names.is_empty() {
        return Err(EvppiError::Parse("no `param:` columns in header".into()));
    }
    for names in [&param_names, &nb_names, &effect_names, &cost_names] {
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(EvppiError::Parse(format!("duplicate column name `{n}`")));
            }
        }
    }
    let use_outcomes = match (nb_names.is_empty(), effect_names.is_empty() && cost_names.is_empty())
    {
        (false, true) => false,
        (true, false) => {
            if effect_names != cost_names {
                return Err(EvppiError::Parse(format!(
                    "effect columns [{}] do not match cost columns [{}]",
                    effect_names.join(", "),
                    cost_names.join(", ")
                )));
            }
            true
        }
        (false, false) => {
            return Err(EvppiError::Parse(
                "use either `nb:` columns or `effect:`/`cost:` pairs, not both".into(),
            ))
        }
        (true, true) => {
            return Err(EvppiError::Parse(
                "no `nb:` or `effect:`/`cost:` columns in header".into(),
            ))
        }
    };

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (row, record) in rdr.records().enumerate() {
        let record =
            record.map_err(|e| EvppiError::Parse(format!("data row {}: {e}", row + 1)))?;
        if record.len() != columns.len() {
            return Err(EvppiError::Parse(format!(
                "data row {} has {} fields, header has {}",
                row + 1,
                record.len(),
                columns.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                EvppiError::Parse(format!(
                    "data row {}, column `{}`: `{field}` is not a number",
                    row + 1,
                    headers.get(j).unwrap_or("?")
                ))
            })?;
            if !v.is_finite() {
                return Err(EvppiError::Parse(format!(
                    "data row {}, column `{}`: non-finite value",
                    row + 1,
                    headers.get(j).unwrap_or("?")
                )));
            }
            cols[j].push(v);
        }
    }

    let s = cols.first().map_or(0, Vec::len);
    let gather = |kind: ColumnKind| -> DMatrix<f64> {
        let picked: Vec<&Vec<f64>> = columns
            .iter()
            .zip(&cols)
            .filter(|(c, _)| c.kind == kind)
            .map(|(_, v)| v)
            .collect();
        DMatrix::from_fn(s, picked.len(), |r, c| picked[c][r])
    };
    let params = gather(ColumnKind::Param);
    if use_outcomes {
        PsaSample::from_outcomes(
            param_names,
            effect_names,
            params,
            gather(ColumnKind::Effect),
            gather(ColumnKind::Cost),
            wtp,
        )
    } else {
        PsaSample::from_net_benefit(param_names, nb_names, params, gather(ColumnKind::Nb))
    }
}

pub fn read_psa_file(path: impl AsRef<Path>, wtp: WillingnessToPay) -> Result<PsaSample> {
    let file = File::open(path.as_ref())?;
    read_psa_csv(BufReader::new(file), wtp)
}

/// Writes a sample. Samples that carry outcomes are written as effect/cost
/// pairs so net benefit stays rebuildable; otherwise as `nb:` columns.
pub fn write_psa_csv<W: Write>(sample: &PsaSample, writer: W) -> Result<()> {
    let mut wtr = ::csv::Writer::from_writer(writer);
    let mut header: Vec<String> = sample
        .param_names()
        .iter()
        .map(|n| format!("param:{n}"))
        .collect();
    let mut blocks: Vec<&DMatrix<f64>> = vec![sample.params()];
    match sample.outcomes() {
        Some(o) => {
            header.extend(sample.treatment_names().iter().map(|t| format!("effect:{t}")));
            header.extend(sample.treatment_names().iter().map(|t| format!("cost:{t}")));
            blocks.push(&o.effects);
            blocks.push(&o.costs);
        }
        None => {
            header.extend(sample.treatment_names().iter().map(|t| format!("nb:{t}")));
            blocks.push(sample.nb());
        }
    }
    let to_io = |e: ::csv::Error| EvppiError::Io(std::io::Error::other(e));
    wtr.write_record(&header).map_err(to_io)?;
    let mut record = Vec::with_capacity(header.len());
    for r in 0..sample.n_sims() {
        record.clear();
        for block in &blocks {
            record.extend(block.row(r).iter().map(|v| v.to_string()));
        }
        wtr.write_record(&record).map_err(to_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_psa_file(sample: &PsaSample, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_psa_csv(sample, BufWriter::new(file))
}
