//! Dataset file formats and result persistence.
//!
//! * `kinship.csv`: header row of subject IDs, then `N` rows of `N` numbers.
//!   The header fixes the subject order; every other file is reindexed to it.
//! * `phenotype.tsv`: `subject_id  node_k  node_l  weight`, 1-based nodes, `k < l`,
//!   every edge of every subject present exactly once.
//! * `genotype.tsv`: `subject_id  snp_id  dosage`, one block per SNP.
//! * `covariates.tsv`: `subject_id` followed by named numeric columns.
//!
//! Parsers reject extra fields and report `path:line:column`. Writes go to a
//! temporary file that is renamed into place.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::BaselineFit;
use crate::error::{BnmeError, Result};
use crate::model::{edge_index, edge_pairs, n_edges, Kinship, NetworkPhenotype};
use crate::projection::CovariateMatrix;
use crate::sampler::{PosteriorSamples, SamplerConfig};
use crate::selection::{FitSummary, GridCell};
use crate::simgen::{GroundTruth, Scenario};

pub const SCHEMA_VERSION: u32 = 1;
pub const PHENOTYPE_HEADER: [&str; 4] = ["subject_id", "node_k", "node_l", "weight"];
pub const GENOTYPE_HEADER: [&str; 3] = ["subject_id", "snp_id", "dosage"];
/// Offending IDs listed in a mismatch error.
const MAX_LISTED: usize = 10;

/// Subject IDs of simulated data, zero-padded to a common width.
pub fn subject_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(4);
    (1..=n).map(|i| format!("S{i:0width$}")).collect()
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> BnmeError {
    BnmeError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Fields of one line with their 1-based starting columns.
fn fields(line: &str, sep: char) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in line.char_indices() {
        if c == sep {
            out.push((start + 1, &line[start..i]));
            start = i + c.len_utf8();
        }
    }
    out.push((start + 1, &line[start..]));
    out
}

fn parse_number(path: &Path, line: usize, (col, text): (usize, &str)) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, col, format!("expected a number, found `{text}`")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, col, format!("non-finite value `{text}`")));
    }
    Ok(v)
}

fn parse_index(path: &Path, line: usize, (col, text): (usize, &str)) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| parse_error(path, line, col, format!("expected a positive integer, found `{text}`")))
}

/// Nonblank lines with 1-based numbers. Blank lines are only allowed at the end.
fn data_lines<'a>(path: &Path, text: &'a str) -> Result<Vec<(usize, &'a str)>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .collect();
    let last = lines
        .iter()
        .rposition(|(_, l)| !l.trim().is_empty())
        .map_or(0, |p| p + 1);
    let body = &lines[..last];
    if let Some((n, _)) = body.iter().find(|(_, l)| l.trim().is_empty()) {
        return Err(parse_error(path, *n, 1, "blank line inside data"));
    }
    Ok(body.to_vec())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| BnmeError::io(path, e))
}

fn check_header(path: &Path, got: &[(usize, &str)], want: &[&str]) -> Result<()> {
    for (i, w) in want.iter().enumerate() {
        match got.get(i) {
            Some((_, g)) if g.trim() == *w => {}
            Some((col, g)) => {
                return Err(parse_error(path, 1, *col, format!("expected column `{w}`, found `{g}`")))
            }
            None => return Err(parse_error(path, 1, 1, format!("missing column `{w}`"))),
        }
    }
    if let Some((col, g)) = got.get(want.len()) {
        return Err(parse_error(path, 1, *col, format!("unexpected column `{g}`")));
    }
    Ok(())
}

fn mismatch_error(file: &Path, missing: Vec<&str>, extra: Vec<&str>) -> BnmeError {
    let list = |v: &[&str]| {
        let mut s = v.iter().take(MAX_LISTED).cloned().collect::<Vec<_>>().join(", ");
        if v.len() > MAX_LISTED {
            let _ = write!(s, ", ... ({} total)", v.len());
        }
        s
    };
    let mut msg = format!("subject IDs in {} do not match kinship.csv", file.display());
    if !missing.is_empty() {
        let _ = write!(msg, "; missing: {}", list(&missing));
    }
    if !extra.is_empty() {
        let _ = write!(msg, "; unknown: {}", list(&extra));
    }
    BnmeError::Data(msg)
}

fn check_subjects<'a>(
    file: &Path,
    order: &HashMap<&'a str, usize>,
    seen: impl IntoIterator<Item = &'a str>,
    subjects: &'a [String],
) -> Result<()> {
    let seen: HashSet<&str> = seen.into_iter().collect();
    let mut extra: Vec<&str> = seen.iter().filter(|s| !order.contains_key(*s)).copied().collect();
    extra.sort_unstable();
    let missing: Vec<&str> = subjects
        .iter()
        .map(|s| s.as_str())
        .filter(|s| !seen.contains(s))
        .collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(mismatch_error(file, missing, extra))
    }
}

fn index_of(subjects: &[String]) -> HashMap<&str, usize> {
    subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

/// Subject IDs and the raw matrix of a kinship file.
pub fn read_kinship(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = read_text(path)?;
    let lines = data_lines(path, &text)?;
    let (_, header) = lines
        .first()
        .ok_or_else(|| parse_error(path, 1, 1, "empty kinship file"))?;
    let ids: Vec<String> = fields(header, ',').iter().map(|(_, s)| s.trim().to_string()).collect();
    let mut dup = HashSet::new();
    for (col, id) in fields(header, ',') {
        if id.trim().is_empty() {
            return Err(parse_error(path, 1, col, "empty subject ID"));
        }
        if !dup.insert(id.trim()) {
            return Err(parse_error(path, 1, col, format!("duplicate subject ID `{}`", id.trim())));
        }
    }
    let n = ids.len();
    if lines.len() - 1 != n {
        let line = lines.get(n + 1).map_or(lines.len() + 1, |l| l.0);
        return Err(parse_error(
            path,
            line,
            1,
            format!("expected {n} kinship rows, found {}", lines.len() - 1),
        ));
    }
    let mut m = DMatrix::zeros(n, n);
    for (row, (line_no, line)) in lines[1..].iter().enumerate() {
        let f = fields(line, ',');
        if f.len() != n {
            let col = f.get(n).map_or(line.len() + 1, |x| x.0);
            return Err(parse_error(
                path,
                *line_no,
                col,
                format!("kinship row {} (subject {}) has {} entries, expected {n}", row + 1, ids[row], f.len()),
            ));
        }
        for (j, field) in f.into_iter().enumerate() {
            m[(row, j)] = parse_number(path, *line_no, field).map_err(|e| match e {
                BnmeError::Parse {
                    path,
                    line,
                    column,
                    message,
                } => BnmeError::Parse {
                    path,
                    line,
                    column,
                    message: format!("kinship row {} (subject {}): {message}", row + 1, ids[row]),
                },
                other => other,
            })?;
        }
    }
    Ok((ids, m))
}

pub fn read_phenotype(path: &Path, subjects: &[String]) -> Result<NetworkPhenotype> {
    let text = read_text(path)?;
    let lines = data_lines(path, &text)?;
    let (_, header) = lines
        .first()
        .ok_or_else(|| parse_error(path, 1, 1, "empty phenotype file"))?;
    check_header(path, &fields(header, '\t'), &PHENOTYPE_HEADER)?;
    let order = index_of(subjects);
    let mut rows = Vec::with_capacity(lines.len().saturating_sub(1));
    let mut max_node = 0;
    for (line_no, line) in &lines[1..] {
        let f = fields(line, '\t');
        if f.len() != 4 {
            let col = f.get(4).map_or(line.len() + 1, |x| x.0);
            return Err(parse_error(path, *line_no, col, format!("expected 4 fields, found {}", f.len())));
        }
        let id = f[0].1.trim();
        let k = parse_index(path, *line_no, f[1])?;
        let l = parse_index(path, *line_no, f[2])?;
        if k == 0 {
            return Err(parse_error(path, *line_no, f[1].0, "node indices are 1-based"));
        }
        if k >= l {
            return Err(parse_error(path, *line_no, f[2].0, format!("need node_k < node_l, got {k} and {l}")));
        }
        let w = parse_number(path, *line_no, f[3])?;
        max_node = max_node.max(l);
        rows.push((*line_no, id, k - 1, l - 1, w, f[0].0));
    }
    check_subjects(path, &order, rows.iter().map(|r| r.1), subjects)?;
    let v = max_node;
    if v < 2 {
        return Err(BnmeError::Data(format!("{}: no edges", path.display())));
    }
    let n = subjects.len();
    let mut ph = NetworkPhenotype::zeros(n, v);
    let mut filled = vec![false; n * n_edges(v)];
    for (line_no, id, k, l, w, col) in rows {
        let i = order[id];
        let e = edge_index(v, k, l);
        if std::mem::replace(&mut filled[e * n + i], true) {
            return Err(parse_error(
                path,
                line_no,
                col,
                format!("duplicate entry for subject {id}, edge ({}, {})", k + 1, l + 1),
            ));
        }
        ph.edge_mut(e)[i] = w;
    }
    if let Some(pos) = filled.iter().position(|f| !f) {
        let (k, l) = edge_pairs(v)[pos / n];
        return Err(BnmeError::Data(format!(
            "{}: missing edge ({}, {}) for subject {}",
            path.display(),
            k + 1,
            l + 1,
            subjects[pos % n]
        )));
    }
    Ok(ph)
}

/// Raw dosages per SNP in file order of first appearance.
pub fn read_genotypes(path: &Path, subjects: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let text = read_text(path)?;
    let lines = data_lines(path, &text)?;
    let (_, header) = lines
        .first()
        .ok_or_else(|| parse_error(path, 1, 1, "empty genotype file"))?;
    check_header(path, &fields(header, '\t'), &GENOTYPE_HEADER)?;
    let order = index_of(subjects);
    let n = subjects.len();
    let mut snps: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut seen_subjects: Vec<&str> = Vec::new();
    for (line_no, line) in &lines[1..] {
        let f = fields(line, '\t');
        if f.len() != 3 {
            let col = f.get(3).map_or(line.len() + 1, |x| x.0);
            return Err(parse_error(path, *line_no, col, format!("expected 3 fields, found {}", f.len())));
        }
        let id = f[0].1.trim();
        let snp = f[1].1.trim();
        if snp.is_empty() {
            return Err(parse_error(path, *line_no, f[1].0, "empty SNP ID"));
        }
        let dosage = parse_number(path, *line_no, f[2])?;
        seen_subjects.push(id);
        let Some(&i) = order.get(id) else { continue };
        let s = *by_id.entry(snp.to_string()).or_insert_with(|| {
            snps.push((snp.to_string(), vec![None; n]));
            snps.len() - 1
        });
        if snps[s].1[i].replace(dosage).is_some() {
            return Err(parse_error(
                path,
                *line_no,
                f[0].0,
                format!("duplicate dosage for subject {id}, SNP {snp}"),
            ));
        }
    }
    check_subjects(path, &order, seen_subjects, subjects)?;
    snps.into_iter()
        .map(|(snp, vals)| {
            let missing: Vec<&str> = vals
                .iter()
                .zip(subjects)
                .filter(|(v, _)| v.is_none())
                .map(|(_, s)| s.as_str())
                .collect();
            if missing.is_empty() {
                Ok((snp, vals.into_iter().map(|v| v.unwrap_or_default()).collect()))
            } else {
                Err(BnmeError::Data(format!(
                    "{}: SNP {snp} has no dosage for {}",
                    path.display(),
                    missing.into_iter().take(MAX_LISTED).collect::<Vec<_>>().join(", ")
                )))
            }
        })
        .collect()
}

pub fn read_covariates(path: &Path, subjects: &[String]) -> Result<CovariateMatrix> {
    let text = read_text(path)?;
    let lines = data_lines(path, &text)?;
    let (_, header) = lines
        .first()
        .ok_or_else(|| parse_error(path, 1, 1, "empty covariate file"))?;
    let head = fields(header, '\t');
    if head[0].1.trim() != "subject_id" {
        return Err(parse_error(path, 1, 1, format!("expected column `subject_id`, found `{}`", head[0].1)));
    }
    let labels: Vec<String> = head[1..].iter().map(|(_, s)| s.trim().to_string()).collect();
    let p = labels.len();
    let order = index_of(subjects);
    let n = subjects.len();
    let mut m = DMatrix::zeros(n, p);
    let mut filled = vec![false; n];
    let mut seen = Vec::new();
    for (line_no, line) in &lines[1..] {
        let f = fields(line, '\t');
        if f.len() != p + 1 {
            let col = f.get(p + 1).map_or(line.len() + 1, |x| x.0);
            return Err(parse_error(path, *line_no, col, format!("expected {} fields, found {}", p + 1, f.len())));
        }
        let id = f[0].1.trim();
        seen.push(id);
        let Some(&i) = order.get(id) else { continue };
        if std::mem::replace(&mut filled[i], true) {
            return Err(parse_error(path, *line_no, f[0].0, format!("duplicate subject {id}")));
        }
        for j in 0..p {
            m[(i, j)] = parse_number(path, *line_no, f[j + 1])?;
        }
    }
    check_subjects(path, &order, seen, subjects)?;
    CovariateMatrix::new(m, labels)
}

/// Everything a fit needs, reindexed to the kinship subject order.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub subjects: Vec<String>,
    pub phenotype: NetworkPhenotype,
    pub genotypes: Vec<(String, Vec<f64>)>,
    pub covariates: CovariateMatrix,
    pub kinship: Kinship,
}

pub struct InputPaths<'a> {
    pub phenotype: &'a Path,
    pub genotype: &'a Path,
    pub kinship: &'a Path,
    pub covariates: Option<&'a Path>,
}

pub fn load_dataset(paths: &InputPaths<'_>) -> Result<LoadedData> {
    let (subjects, matrix) = read_kinship(paths.kinship)?;
    let kinship = Kinship::new(matrix)?;
    let phenotype = read_phenotype(paths.phenotype, &subjects)?;
    let genotypes = read_genotypes(paths.genotype, &subjects)?;
    if genotypes.is_empty() {
        return Err(BnmeError::Data(format!("{}: no SNPs", paths.genotype.display())));
    }
    let covariates = match paths.covariates {
        Some(p) => read_covariates(p, &subjects)?,
        None => CovariateMatrix::empty(subjects.len()),
    };
    Ok(LoadedData {
        subjects,
        phenotype,
        genotypes,
        covariates,
        kinship,
    })
}

impl LoadedData {
    /// SHA-256 over the reindexed contents; independent of row order in the files.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let put_f64s = |h: &mut Sha256, xs: &[f64]| {
            for x in xs {
                h.update(x.to_bits().to_le_bytes());
            }
        };
        h.update((self.subjects.len() as u64).to_le_bytes());
        for s in &self.subjects {
            h.update(s.as_bytes());
            h.update([0u8]);
        }
        h.update((self.phenotype.n_nodes() as u64).to_le_bytes());
        put_f64s(&mut h, self.phenotype.values());
        for (id, d) in &self.genotypes {
            h.update(id.as_bytes());
            h.update([0u8]);
            put_f64s(&mut h, d);
        }
        for l in &self.covariates.labels {
            h.update(l.as_bytes());
            h.update([0u8]);
        }
        put_f64s(&mut h, self.covariates.matrix.as_slice());
        put_f64s(&mut h, self.kinship.matrix().as_slice());
        hex::encode(h.finalize())
    }
}

/// Writes through a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| BnmeError::Data(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| BnmeError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| BnmeError::io(&tmp, e))?;
    f.sync_all().map_err(|e| BnmeError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| BnmeError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| BnmeError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn format_kinship(subjects: &[String], m: &DMatrix<f64>) -> String {
    let mut s = subjects.join(",");
    s.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn format_phenotype(subjects: &[String], ph: &NetworkPhenotype) -> String {
    let mut s = PHENOTYPE_HEADER.join("\t");
    s.push('\n');
    let pairs = edge_pairs(ph.n_nodes());
    for (i, id) in subjects.iter().enumerate() {
        for (e, (k, l)) in pairs.iter().enumerate() {
            let _ = writeln!(s, "{id}\t{}\t{}\t{}", k + 1, l + 1, ph.edge(e)[i]);
        }
    }
    s
}

pub fn format_genotypes(subjects: &[String], snps: &[(String, Vec<f64>)]) -> String {
    let mut s = GENOTYPE_HEADER.join("\t");
    s.push('\n');
    for (snp, dosages) in snps {
        for (id, d) in subjects.iter().zip(dosages) {
            let _ = writeln!(s, "{id}\t{snp}\t{d}");
        }
    }
    s
}

pub fn format_covariates(subjects: &[String], x: &CovariateMatrix) -> String {
    let mut s = String::from("subject_id");
    for l in &x.labels {
        s.push('\t');
        s.push_str(l);
    }
    s.push('\n');
    for (i, id) in subjects.iter().enumerate() {
        s.push_str(id);
        for j in 0..x.n_covariates() {
            let _ = write!(s, "\t{}", x.matrix[(i, j)]);
        }
        s.push('\n');
    }
    s
}

/// `truth.json`: node indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub scenario: Scenario,
    pub support: Vec<[usize; 2]>,
    pub component_supports: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    pub loadings: Vec<Vec<f64>>,
    /// Edge-indexed effect matrix.
    pub theta: Vec<f64>,
    /// `E x P`, edge-major.
    pub covariate_coefficients: Vec<f64>,
}

impl TruthFile {
    pub fn new(scenario: &Scenario, truth: &GroundTruth) -> Self {
        let pairs = edge_pairs(scenario.n_nodes);
        let c = &truth.components;
        TruthFile {
            scenario: scenario.clone(),
            support: truth
                .support
                .iter()
                .map(|&e| [pairs[e].0 + 1, pairs[e].1 + 1])
                .collect(),
            component_supports: truth
                .component_supports
                .iter()
                .map(|s| s.iter().map(|v| v + 1).collect())
                .collect(),
            weights: c.eta.clone(),
            loadings: (0..c.n_components()).map(|h| c.theta_row(h).to_vec()).collect(),
            theta: truth.theta.values.clone(),
            covariate_coefficients: truth.covariate_coefficients.clone(),
        }
    }

    /// Support as 0-based edge indices.
    pub fn support_edges(&self) -> Vec<usize> {
        let v = self.scenario.n_nodes;
        self.support.iter().map(|[k, l]| edge_index(v, k - 1, l - 1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub scenario: Scenario,
    /// File name to SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bnme,
    Lmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub n_components: usize,
    pub nu: f64,
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnpResult {
    pub snp_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineFit>,
}

/// Run settings echoed into the results; file paths are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    pub credible_level: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nu_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub method: Method,
    pub config: ConfigEcho,
    pub seed: u64,
    pub dataset_hash: String,
    pub n_subjects: usize,
    pub n_covariates: usize,
    pub n_nodes: usize,
    pub results: Vec<SnpResult>,
    pub wall_clock_seconds: f64,
}

pub fn read_results(path: &Path) -> Result<ResultsFile> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| BnmeError::Data(format!("{}: missing schema_version", path.display())))?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(BnmeError::SchemaVersion {
            found: found.min(u64::from(u32::MAX)) as u32,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}

/// Per-draw trace table: log-likelihood, raw slot weights and indicators,
/// and the edge-averaged variances.
pub fn format_chains(snp_id: &str, samples: &[PosteriorSamples], header: bool) -> String {
    let h = samples.first().map_or(0, |s| s.n_components);
    let mut s = String::new();
    if !header {
        return chain_rows(snp_id, samples, s);
    }
    s.push_str("snp_id,chain,draw,log_likelihood");
    for i in 1..=h {
        let _ = write!(s, ",eta_{i}");
    }
    for i in 1..=h {
        let _ = write!(s, ",tau_{i}");
    }
    s.push_str(",sigma_a_mean,sigma_e_mean\n");
    chain_rows(snp_id, samples, s)
}

fn chain_rows(snp_id: &str, samples: &[PosteriorSamples], mut s: String) -> String {
    for c in samples {
        let e = c.n_edges().max(1) as f64;
        for d in 0..c.n_draws {
            let _ = write!(s, "{snp_id},{},{},{}", c.chain_index, d, c.log_likelihood[d]);
            for x in c.eta_draw(d) {
                let _ = write!(s, ",{x}");
            }
            for x in c.tau_draw(d) {
                let _ = write!(s, ",{x}");
            }
            let sa = c.sigma_a_draw(d).iter().sum::<f64>() / e;
            let se = c.sigma_e_draw(d).iter().sum::<f64>() / e;
            let _ = writeln!(s, ",{sa},{se}");
        }
    }
    s
}
