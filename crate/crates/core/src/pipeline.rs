//! Run configuration, document ingest and the analyze/extract pipeline.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::extraction::{build_plan, extract_assigned, write_csv, write_jsonl, Extraction, ExtractionPlan};
use crate::hierarchy::{build_hierarchy, HierarchyResult};
use crate::scoring::FeatureScoreMap;
use crate::templates::{
    detect_templates, mask_pattern, match_line, DetectOptions, RoleRules, TemplateId, TemplateSeries, TemplateSet,
};

pub const TAB_STOP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    #[default]
    Csv,
    Jsonl,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Csv => "csv",
            RecordFormat::Jsonl => "jsonl",
        }
    }
}

impl std::str::FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" => Ok(RecordFormat::Jsonl),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub sample_lines: usize,
    pub min_similarity: f64,
    pub adaptive: bool,
    pub score_map: Option<PathBuf>,
    pub role_rules: RoleRules,
    pub out_dir: PathBuf,
    pub format: RecordFormat,
    pub emit_series: bool,
    pub emit_svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DetectOptions::default();
        RunConfig {
            sample_lines: d.sample_size,
            min_similarity: d.min_similarity,
            adaptive: d.adaptive,
            score_map: None,
            role_rules: d.role_rules,
            out_dir: PathBuf::from("."),
            format: RecordFormat::Csv,
            emit_series: false,
            emit_svg: false,
        }
    }
}

/// Config file contents: every key optional, names mirror the CLI flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub sample_lines: Option<usize>,
    pub min_similarity: Option<f64>,
    pub adaptive: Option<bool>,
    pub score_map: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<RecordFormat>,
    pub emit_series: Option<bool>,
    pub emit_svg: Option<bool>,
    pub decor_symbol_fraction: Option<f64>,
    pub heading_digit_fraction: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.score_map, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies the file on top of `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(sample_lines, min_similarity, adaptive, out_dir, format, emit_series, emit_svg);
        if self.score_map.is_some() {
            cfg.score_map = self.score_map.clone();
        }
        if let Some(v) = self.decor_symbol_fraction {
            cfg.role_rules.decor_symbol_fraction = v;
        }
        if let Some(v) = self.heading_digit_fraction {
            cfg.role_rules.heading_digit_fraction = v;
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_lines == 0 {
            return Err(Error::InvalidConfig("sample-lines must be at least 1".into()));
        }
        if self.min_similarity.is_nan() || self.min_similarity < 0.0 {
            return Err(Error::InvalidConfig("min-similarity must be non-negative".into()));
        }
        Ok(())
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            sample_size: self.sample_lines,
            min_similarity: self.min_similarity,
            adaptive: self.adaptive,
            role_rules: self.role_rules,
        }
    }

    pub fn load_map(&self) -> Result<FeatureScoreMap> {
        match &self.score_map {
            None => Ok(FeatureScoreMap::default()),
            Some(path) => fs::read_to_string(path)
                .map_err(|e| Error::io(path, e))?
                .parse(),
        }
    }
}

/// Expands tabs to spaces at fixed stops.
pub fn expand_tabs(line: &str) -> String {
    if !line.contains('\t') {
        return line.to_string();
    }
    let mut out = String::with_capacity(line.len() + 8);
    let mut col = 0;
    for c in line.chars() {
        if c == '\t' {
            let n = TAB_STOP - col % TAB_STOP;
            out.extend(std::iter::repeat_n(' ', n));
            col += n;
        } else {
            out.push(c);
            col += 1;
        }
    }
    out
}

/// Decodes a document: UTF-8, or one character per byte (Latin-1) when the
/// bytes are not valid UTF-8. Lines split on LF or CRLF, tabs expanded,
/// trailing whitespace removed.
pub fn decode_document(bytes: &[u8]) -> Vec<String> {
    let text = match std::str::from_utf8(bytes) {
        Ok(s) => s.strip_prefix('\u{feff}').unwrap_or(s).to_string(),
        Err(_) => bytes.iter().map(|&b| char::from(b)).collect(),
    };
    let mut lines: Vec<String> = text
        .split('\n')
        .map(|l| expand_tabs(l.strip_suffix('\r').unwrap_or(l)).trim_end().to_string())
        .collect();
    if text.ends_with('\n') {
        lines.pop();
    }
    if text.is_empty() {
        lines.clear();
    }
    lines
}

pub fn read_document(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_document(&bytes))
}

/// Result of the analysis stages.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub lines: Vec<String>,
    pub templates: TemplateSet,
    /// Template of each line (index = line - 1).
    pub assigned: Vec<Option<TemplateId>>,
    pub hierarchy: HierarchyResult,
}

impl Analysis {
    pub fn series(&self) -> TemplateSeries {
        TemplateSeries(
            self.assigned
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.map(|t| (i + 1, t)))
                .collect(),
        )
    }

    /// Non-blank lines no template accepted.
    pub fn unmatched(&self) -> usize {
        self.lines
            .iter()
            .zip(&self.assigned)
            .filter(|(l, t)| t.is_none() && !l.trim().is_empty())
            .count()
    }

    pub fn dss(&self) -> String {
        self.hierarchy.dss()
    }

    pub fn templates_json(&self, cfg: &RunConfig) -> serde_json::Value {
        let structures: Vec<_> = self
            .hierarchy
            .structures
            .iter()
            .map(|s| {
                json!({
                    "pattern": s.pattern.render(),
                    "levels": s.pattern.levels().iter().map(|p| p.render()).collect::<Vec<_>>(),
                    "tree": s.pattern,
                    "collapse_iterations": s.collapse_iterations,
                })
            })
            .collect();
        let templates: Vec<_> = self
            .templates
            .templates
            .iter()
            .map(|t| {
                let mut v = json!(t);
                v["mask_regex"] = json!(mask_pattern(&t.mask));
                v
            })
            .collect();
        json!({
            "sample_lines": cfg.sample_lines,
            "min_similarity": cfg.min_similarity,
            "adaptive": cfg.adaptive,
            "document_lines": self.lines.len(),
            "unmatched_lines": self.unmatched(),
            "templates": templates,
            "structure": {
                "dss": self.dss(),
                "structures": structures,
                "noise_log": self.hierarchy.noise_log,
                "residue": self.hierarchy.residue,
            },
        })
    }

    pub fn plan(&self) -> Result<ExtractionPlan> {
        build_plan(&self.templates, &self.hierarchy)
    }

    pub fn extract(&self, plan: &ExtractionPlan) -> Extraction {
        extract_assigned(&self.lines, &self.assigned, plan)
    }
}

/// Detects templates on the sample, assigns every other line by matching,
/// and builds the hierarchy of the whole document's series.
pub fn analyze(lines: Vec<String>, cfg: &RunConfig) -> Result<Analysis> {
    cfg.validate()?;
    let map = cfg.load_map()?;
    let (templates, sample_series) = detect_templates(&lines, &map, &cfg.detect_options())?;
    let mut assigned: Vec<Option<TemplateId>> = vec![None; lines.len()];
    for &(line, id) in &sample_series.0 {
        assigned[line - 1] = Some(id);
    }
    let sample_end = cfg.sample_lines.min(lines.len());
    for (i, line) in lines.iter().enumerate().skip(sample_end) {
        assigned[i] = match_line(line, &templates);
    }
    let ids: Vec<TemplateId> = assigned.iter().flatten().copied().collect();
    let hierarchy = build_hierarchy(&ids, &templates.detail_ids())?;
    Ok(Analysis {
        lines,
        templates,
        assigned,
        hierarchy,
    })
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_analysis(a: &Analysis, cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.out_dir;
    write_atomic(&dir.join("dss.txt"), format!("{}\n", a.dss()).as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&a.templates_json(cfg))?;
    json.push(b'\n');
    write_atomic(&dir.join("templates.json"), &json)?;
    write_atomic(&dir.join("series.csv"), a.series().to_csv().as_bytes())?;
    Ok(())
}

pub fn records_bytes(plan: &ExtractionPlan, ex: &Extraction, format: RecordFormat) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        RecordFormat::Csv => write_csv(&mut buf, plan, &ex.records)?,
        RecordFormat::Jsonl => write_jsonl(&mut buf, plan, &ex.records)?,
    }
    Ok(buf)
}
