//! Plain-text dataset manifests.
//!
//! ```text
//! # comment
//! csv = adult.csv                 # relative to the manifest's directory
//! missing = ?                     # rows holding this token are dropped (repeatable)
//! feature = hours-per-week        # numeric feature
//! feature = education : onehot    # one indicator feature per distinct value
//! sensitive = age
//! group = 25..44 -> 1             # inclusive numeric range
//! group = * -> 2                  # fallback
//! target = income : in >50K | >50K.
//! target = workclass : onehot     # one target per distinct value
//! target = default                # already 0/1
//! ```
//!
//! `group = <value> -> k` maps one categorical value. Exact values are tried
//! first, then ranges in file order, then `*`. Without any `group` line the
//! sensitive column must already hold integers `1..=K`. `groups = K` pins `K`
//! explicitly; otherwise it is the largest index that appears.
//!
//! CSV dialect: UTF-8, comma delimiter, header row, `.` decimal point, cells
//! trimmed of surrounding whitespace.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::error::{Result, SimFairError};
use crate::fairness::SensitiveAttr;
use crate::linalg::Matrix;
use crate::similarity::LabelVector;

use super::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnRule {
    Numeric,
    OneHot,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetRule {
    /// Cell must already be `0` or `1`.
    Binary,
    /// 1 iff the cell equals one of the listed values.
    In(Vec<String>),
    OneHot,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupRule {
    Value(String, u32),
    Range(f64, f64, u32),
    Default(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub csv_path: PathBuf,
    pub missing: Vec<String>,
    pub features: Vec<(String, ColumnRule)>,
    pub sensitive: String,
    pub groups: Vec<GroupRule>,
    pub num_groups: Option<usize>,
    pub targets: Vec<(String, TargetRule)>,
}

fn err_line(line_no: usize, msg: impl std::fmt::Display) -> SimFairError {
    SimFairError::config(format!("manifest line {line_no}: {msg}"))
}

fn split_rule(value: &str) -> (&str, Option<&str>) {
    match value.split_once(':') {
        Some((col, rule)) => (col.trim(), Some(rule.trim())),
        None => (value.trim(), None),
    }
}

/// Parses manifest text; relative CSV paths resolve against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let mut csv_path = None;
    let mut missing = Vec::new();
    let mut features = Vec::new();
    let mut sensitive = None;
    let mut groups = Vec::new();
    let mut num_groups = None;
    let mut targets = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err_line(line_no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "csv" => {
                let p = PathBuf::from(value);
                csv_path = Some(if p.is_absolute() { p } else { base_dir.join(p) });
            }
            "missing" => missing.push(value.to_string()),
            "feature" => {
                let (col, rule) = split_rule(value);
                let rule = match rule {
                    None | Some("numeric") => ColumnRule::Numeric,
                    Some("onehot") => ColumnRule::OneHot,
                    Some(other) => {
                        return Err(err_line(line_no, format!("unknown feature rule {other:?}")))
                    }
                };
                features.push((col.to_string(), rule));
            }
            "sensitive" => sensitive = Some(value.to_string()),
            "groups" => {
                num_groups = Some(
                    value
                        .parse()
                        .map_err(|_| err_line(line_no, format!("bad group count {value:?}")))?,
                )
            }
            "group" => {
                let (lhs, rhs) = value
                    .rsplit_once("->")
                    .ok_or_else(|| err_line(line_no, "expected `group = <value> -> <k>`"))?;
                let k: u32 = rhs.trim().parse().ok().filter(|&k| k >= 1).ok_or_else(|| {
                    err_line(line_no, format!("bad group index {:?}", rhs.trim()))
                })?;
                let lhs = lhs.trim();
                let rule = if lhs == "*" {
                    GroupRule::Default(k)
                } else if let Some((lo, hi)) = lhs.split_once("..") {
                    let parse = |s: &str| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| err_line(line_no, format!("bad range bound {s:?}")))
                    };
                    GroupRule::Range(parse(lo)?, parse(hi)?, k)
                } else {
                    GroupRule::Value(lhs.to_string(), k)
                };
                groups.push(rule);
            }
            "target" => {
                let (col, rule) = split_rule(value);
                let rule = match rule {
                    None | Some("binary") => TargetRule::Binary,
                    Some("onehot") => TargetRule::OneHot,
                    Some(r) if r.starts_with("in ") => {
                        TargetRule::In(r[3..].split('|').map(|v| v.trim().to_string()).collect())
                    }
                    Some(other) => {
                        return Err(err_line(line_no, format!("unknown target rule {other:?}")))
                    }
                };
                targets.push((col.to_string(), rule));
            }
            other => return Err(err_line(line_no, format!("unknown key {other:?}"))),
        }
    }

    let manifest = Manifest {
        csv_path: csv_path.ok_or_else(|| SimFairError::config("manifest has no `csv` entry"))?,
        missing,
        features,
        sensitive: sensitive
            .ok_or_else(|| SimFairError::config("manifest has no `sensitive` entry"))?,
        groups,
        num_groups,
        targets,
    };
    if manifest.targets.is_empty() {
        return Err(SimFairError::config("manifest declares no targets"));
    }
    let mut seen = BTreeSet::new();
    let roles = manifest
        .features
        .iter()
        .map(|f| &f.0)
        .chain(std::iter::once(&manifest.sensitive))
        .chain(manifest.targets.iter().map(|t| &t.0));
    for col in roles {
        if !seen.insert(col.as_str()) {
            return Err(SimFairError::config(format!(
                "column {col:?} is assigned more than one role"
            )));
        }
    }
    Ok(manifest)
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimFairError::config(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn map_group(&self, cell: &str) -> Option<u32> {
        if self.groups.is_empty() {
            return cell.parse().ok().filter(|&k| k >= 1);
        }
        let exact = self.groups.iter().find_map(|g| match g {
            GroupRule::Value(v, k) if v == cell => Some(*k),
            _ => None,
        });
        exact
            .or_else(|| {
                let x: f64 = cell.parse().ok()?;
                self.groups.iter().find_map(|g| match g {
                    GroupRule::Range(lo, hi, k) if *lo <= x && x <= *hi => Some(*k),
                    _ => None,
                })
            })
            .or_else(|| {
                self.groups.iter().find_map(|g| match g {
                    GroupRule::Default(k) => Some(*k),
                    _ => None,
                })
            })
    }
}

/// Reads the manifest's CSV into a [`Dataset`]. Features are left
/// unstandardized; [`super::split`] standardizes on the training split.
pub fn load(manifest: &Manifest) -> Result<Dataset> {
    let file = std::fs::File::open(&manifest.csv_path).map_err(|e| {
        SimFairError::data(format!("cannot open {}: {e}", manifest.csv_path.display()))
    })?;
    load_from_reader(manifest, file)
}

pub(crate) fn load_from_reader<R: std::io::Read>(
    manifest: &Manifest,
    reader: R,
) -> Result<Dataset> {
    let csv_err = |e: csv::Error| SimFairError::data(format!("csv parse error: {e}"));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let position: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let col = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| SimFairError::data(format!("column {name:?} not found in CSV header")))
    };

    let feature_cols: Vec<usize> = manifest
        .features
        .iter()
        .map(|f| col(&f.0))
        .collect::<Result<_>>()?;
    let sensitive_col = col(&manifest.sensitive)?;
    let target_cols: Vec<usize> = manifest
        .targets
        .iter()
        .map(|t| col(&t.0))
        .collect::<Result<_>>()?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(SimFairError::data(format!(
                "row {} has {} cells, header has {}",
                i + 2,
                rec.len(),
                header.len()
            )));
        }
        let row: Vec<String> = rec.iter().map(str::to_string).collect();
        let used = feature_cols
            .iter()
            .chain(&target_cols)
            .chain(std::iter::once(&sensitive_col));
        if used
            .into_iter()
            .any(|&c| manifest.missing.iter().any(|m| *m == row[c]))
        {
            continue;
        }
        rows.push(row);
    }

    let levels = |c: usize| -> Vec<String> {
        let set: BTreeSet<&str> = rows.iter().map(|r| r[c].as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };

    // feature layout
    let mut feature_names = Vec::new();
    let mut feature_plan: Vec<(usize, Option<Vec<String>>)> = Vec::new();
    for ((name, rule), &c) in manifest.features.iter().zip(&feature_cols) {
        match rule {
            ColumnRule::Numeric => {
                feature_names.push(name.clone());
                feature_plan.push((c, None));
            }
            ColumnRule::OneHot => {
                let lv = levels(c);
                feature_names.extend(lv.iter().map(|v| format!("{name}={v}")));
                feature_plan.push((c, Some(lv)));
            }
        }
    }

    // target layout
    let mut target_names = Vec::new();
    let mut target_plan: Vec<(usize, &TargetRule, Option<Vec<String>>)> = Vec::new();
    for ((name, rule), &c) in manifest.targets.iter().zip(&target_cols) {
        match rule {
            TargetRule::OneHot => {
                let lv = levels(c);
                target_names.extend(lv.iter().map(|v| format!("{name}={v}")));
                target_plan.push((c, rule, Some(lv)));
            }
            _ => {
                target_names.push(name.clone());
                target_plan.push((c, rule, None));
            }
        }
    }

    let mut x = Vec::with_capacity(rows.len() * feature_names.len());
    let mut sensitive = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let line = r + 2;
        for (c, onehot) in &feature_plan {
            match onehot {
                None => x.push(row[*c].parse::<f64>().map_err(|_| {
                    SimFairError::data(format!(
                        "row {line}: feature {:?} value {:?} is not numeric",
                        header[*c], row[*c]
                    ))
                })?),
                Some(levels) => x.extend(levels.iter().map(|v| f64::from(u8::from(*v == row[*c])))),
            }
        }
        let k = manifest.map_group(&row[sensitive_col]).ok_or_else(|| {
            SimFairError::data(format!(
                "row {line}: sensitive value {:?} has no group mapping",
                row[sensitive_col]
            ))
        })?;
        sensitive.push(SensitiveAttr::new(k)?);
        let mut bits = Vec::with_capacity(target_names.len());
        for (c, rule, onehot) in &target_plan {
            let cell = &row[*c];
            match (rule, onehot) {
                (_, Some(levels)) => bits.extend(levels.iter().map(|v| v == cell)),
                (TargetRule::In(values), None) => bits.push(values.iter().any(|v| v == cell)),
                _ => bits.push(match cell.as_str() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(SimFairError::data(format!(
                            "row {line}: target {:?} value {other:?} is not binary",
                            header[*c]
                        )))
                    }
                }),
            }
        }
        labels.push(LabelVector::new(bits));
    }

    let observed_k = sensitive
        .iter()
        .map(|a| a.value() as usize)
        .max()
        .unwrap_or(0);
    let mapped_k = manifest
        .groups
        .iter()
        .map(|g| match g {
            GroupRule::Value(_, k) | GroupRule::Range(_, _, k) | GroupRule::Default(k) => {
                *k as usize
            }
        })
        .max()
        .unwrap_or(0);
    let num_groups = manifest.num_groups.unwrap_or(observed_k.max(mapped_k));
    if rows.is_empty() {
        return Err(SimFairError::data("no usable rows in CSV"));
    }
    let features = Matrix::from_vec(rows.len(), feature_names.len(), x)?;
    Dataset::with_names(
        features,
        sensitive,
        labels,
        num_groups,
        feature_names,
        manifest.sensitive.clone(),
        target_names,
    )
}
