//! Template recognition: clustering identically formatted lines.
//!
//! Lines of the sample are scanned top-down. Each still-unmarked line is
//! compared with every other unmarked line; the recognition threshold is
//! placed in the middle of the largest gap between the distinct scores, and
//! every line scoring above it joins the new template. Optionally the score
//! map is first adapted to the line and its closest non-identical partner, which sharpens
//! the gap.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{adapt_map, classify_char, compare_lines, CharClass, FeatureScoreMap};

pub type TemplateId = usize;

/// Column span of a field, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpan {
    pub start: usize,
    pub end: usize,
}

impl FieldSpan {
    /// Trimmed text of `line` under this span; empty if the line is shorter.
    pub fn extract<'a>(&self, line: &'a str) -> &'a str {
        let mut begin = None;
        let mut finish = line.len();
        for (col, (byte, _)) in line.char_indices().enumerate() {
            if col + 1 == self.start {
                begin = Some(byte);
            }
            if col == self.end {
                finish = byte;
                break;
            }
        }
        match begin {
            Some(b) => line[b..finish].trim(),
            None => "",
        }
    }
}

/// Per-column statistics of a template's member lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    /// Set when every member has the same character here (a space counts).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal: Option<char>,
    /// Classes of the non-space characters seen, when not literal.
    #[serde(skip_serializing_if = "BTreeSet::is_empty", default)]
    pub classes: BTreeSet<CharClass>,
    /// Blank in at least one member (and not literal).
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub optional: bool,
}

pub type ColumnMask = Vec<ColumnDescriptor>;

fn class_regex(class: CharClass) -> &'static str {
    match class {
        CharClass::Alpha => r"\p{Alphabetic}",
        CharClass::Numeric => r"\d",
        CharClass::Symbol => r"[^\s\p{Alphabetic}\d]",
        CharClass::Space => " ",
    }
}

/// Regular expression equivalent of a column mask.
pub fn mask_pattern(mask: &ColumnMask) -> String {
    let mut out = String::new();
    for col in mask {
        if let Some(c) = col.literal {
            if !c.is_alphanumeric() && c != ' ' {
                out.push('\\');
            }
            out.push(c);
            continue;
        }
        let mut alts: Vec<&str> = col.classes.iter().map(|c| class_regex(*c)).collect();
        if col.optional {
            alts.push(" ");
        }
        if alts.len() == 1 {
            out.push_str(alts[0]);
        } else {
            out.push_str(&format!("(?:{})", alts.join("|")));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Body,
    Heading,
    Decor,
    Detail,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Body => "body",
            Role::Heading => "heading",
            Role::Decor => "decor",
            Role::Detail => "detail",
        })
    }
}

/// Cut-offs used by [`classify_role`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleRules {
    /// Minimum fraction of symbol characters for a decor line.
    pub decor_symbol_fraction: f64,
    /// Maximum fraction of digits for a heading line.
    pub heading_digit_fraction: f64,
}

impl Default for RoleRules {
    fn default() -> Self {
        RoleRules {
            decor_symbol_fraction: 0.8,
            heading_digit_fraction: 0.05,
        }
    }
}

/// Content statistics over a template's members, used for role detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentStats {
    pub symbol_fraction: f64,
    pub digit_fraction: f64,
    pub identical: bool,
}

impl ContentStats {
    pub fn of(members: &[&str]) -> Self {
        let mut non_space = 0usize;
        let mut symbols = 0usize;
        let mut digits = 0usize;
        for line in members {
            for c in line.chars() {
                match classify_char(c) {
                    CharClass::Space => continue,
                    CharClass::Symbol => symbols += 1,
                    CharClass::Numeric => digits += 1,
                    CharClass::Alpha => {}
                }
                non_space += 1;
            }
        }
        let frac = |n: usize| if non_space == 0 { 0.0 } else { n as f64 / non_space as f64 };
        let first = members.first().map(|l| l.trim_end());
        ContentStats {
            symbol_fraction: frac(symbols),
            digit_fraction: frac(digits),
            identical: members.iter().all(|l| Some(l.trim_end()) == first),
        }
    }
}

/// One recognized line format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Template {
    pub id: TemplateId,
    /// 0-based index of the reference line in the input.
    pub reference_line: usize,
    pub reference_text: String,
    /// 0-based input indices, ascending.
    pub members: Vec<usize>,
    /// `None` for singleton templates, which only match their reference text.
    pub threshold: Option<f64>,
    pub adapted_map: FeatureScoreMap,
    pub field_layout: Vec<FieldSpan>,
    pub key_name: String,
    pub mask: ColumnMask,
    pub stats: ContentStats,
    pub role: Role,
    /// Scores of all lines still unmarked when the template was created,
    /// against the reference line with the adapted map.
    #[serde(skip)]
    pub creation_scores: Vec<(usize, f64)>,
}

impl Template {
    pub fn line_count(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
}

impl TemplateSet {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: TemplateId) -> Option<&Template> {
        self.templates.get(id)
    }

    pub fn detail_ids(&self) -> Vec<TemplateId> {
        self.templates
            .iter()
            .filter(|t| t.role == Role::Detail)
            .map(|t| t.id)
            .collect()
    }
}

/// Ordered `(line number, template id)` pairs; line numbers are 1-based.
/// Blank lines are not part of the series.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSeries(pub Vec<(usize, TemplateId)>);

impl TemplateSeries {
    pub fn ids(&self) -> Vec<TemplateId> {
        self.0.iter().map(|&(_, id)| id).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("line,template_id\n");
        for (line, id) in &self.0 {
            out.push_str(&format!("{line},{id}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub sample_size: usize,
    pub min_similarity: f64,
    pub adaptive: bool,
    pub role_rules: RoleRules,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            sample_size: 200,
            min_similarity: 50.0,
            adaptive: true,
            role_rules: RoleRules::default(),
        }
    }
}

/// Midpoint of the largest gap between consecutive distinct values.
/// Equal gaps resolve to the highest-valued one.
pub fn gap_threshold(scores: &[f64]) -> Result<f64> {
    let distinct = distinct_sorted(scores);
    if distinct.len() < 2 {
        return Err(Error::NoGap);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for pair in distinct.windows(2) {
        let gap = pair[1] - pair[0];
        if gap >= best.0 {
            best = (gap, (pair[0] + pair[1]) / 2.0);
        }
    }
    Ok(best.1)
}

/// Gaps between consecutive distinct values, largest first.
pub fn sorted_gaps(scores: &[f64]) -> Vec<f64> {
    let distinct = distinct_sorted(scores);
    let mut gaps: Vec<f64> = distinct.windows(2).map(|p| p[1] - p[0]).collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    gaps
}

fn distinct_sorted(scores: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Field spans and key name of a group of lines. A column separates fields
/// when it is blank in every member.
pub fn build_field_layout(members: &[&str]) -> (Vec<FieldSpan>, String) {
    let rows: Vec<Vec<char>> = members.iter().map(|l| l.chars().collect()).collect();
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut fields = Vec::new();
    let mut start = None;
    for col in 0..width {
        let separator = rows
            .iter()
            .all(|r| r.get(col).is_none_or(|c| c.is_whitespace()));
        match (separator, start) {
            (false, None) => start = Some(col),
            (true, Some(s)) => {
                fields.push(FieldSpan { start: s + 1, end: col });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        fields.push(FieldSpan { start: s + 1, end: width });
    }
    let key = fields
        .iter()
        .map(|f| f.start.to_string())
        .collect::<Vec<_>>()
        .join("-");
    (fields, key)
}

pub fn build_mask(members: &[&str]) -> ColumnMask {
    let rows: Vec<Vec<char>> = members.iter().map(|l| l.trim_end().chars().collect()).collect();
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    (0..width)
        .map(|col| {
            let chars: BTreeSet<char> = rows
                .iter()
                .map(|r| r.get(col).copied().filter(|c| !c.is_whitespace()).unwrap_or(' '))
                .collect();
            if chars.len() == 1 {
                return ColumnDescriptor {
                    literal: chars.first().copied(),
                    classes: BTreeSet::new(),
                    optional: false,
                };
            }
            ColumnDescriptor {
                literal: None,
                classes: chars
                    .iter()
                    .map(|&c| classify_char(c))
                    .filter(|c| *c != CharClass::Space)
                    .collect(),
                optional: chars.contains(&' '),
            }
        })
        .collect()
}

/// First matching rule wins: decor, heading, detail, body.
pub fn classify_role(t: &Template, all: &TemplateSet, rules: &RoleRules) -> Role {
    if t.stats.symbol_fraction >= rules.decor_symbol_fraction {
        return Role::Decor;
    }
    if t.stats.identical && t.stats.digit_fraction < rules.heading_digit_fraction {
        return Role::Heading;
    }
    let max_count = all.templates.iter().map(Template::line_count).max().unwrap_or(0);
    if t.line_count() == max_count {
        return Role::Detail;
    }
    Role::Body
}

/// Clusters the first `sample_size` lines into templates.
pub fn detect_templates<S: AsRef<str>>(
    lines: &[S],
    map: &FeatureScoreMap,
    opts: &DetectOptions,
) -> Result<(TemplateSet, TemplateSeries)> {
    map.validate()?;
    if opts.sample_size == 0 {
        return Err(Error::InvalidConfig("sample size must be at least 1".into()));
    }
    let sample: Vec<(usize, &str)> = lines
        .iter()
        .take(opts.sample_size)
        .enumerate()
        .map(|(i, l)| (i, l.as_ref()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if sample.is_empty() {
        return Err(Error::EmptyDocument);
    }

    let mut owner: Vec<Option<TemplateId>> = vec![None; sample.len()];
    let mut set = TemplateSet::default();

    for i in 0..sample.len() {
        if owner[i].is_some() {
            continue;
        }
        let id = set.templates.len();
        let (ref_idx, ref_text) = sample[i];
        let others: Vec<usize> = (0..sample.len())
            .filter(|&j| j != i && owner[j].is_none())
            .collect();

        let score_all = |m: &FeatureScoreMap| -> Result<Vec<f64>> {
            others
                .iter()
                .map(|&j| compare_lines(ref_text, sample[j].1, m))
                .collect()
        };
        let mut used_map = *map;
        let mut scores = score_all(map)?;
        // Every remaining line is similar under the base map: a gap would
        // only split one template.
        let floor_met = scores.iter().all(|&s| s >= opts.min_similarity);
        if opts.adaptive {
            // A copy of the reference says nothing about which columns vary.
            let best = others
                .iter()
                .zip(&scores)
                .filter(|(&j, _)| sample[j].1.trim_end() != ref_text.trim_end())
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)));
            if let Some((&partner, &s)) = best {
                if s >= opts.min_similarity {
                    if let Ok(adapted) = adapt_map(ref_text, sample[partner].1, map) {
                        let adapted_scores = score_all(&adapted)?;
                        // Under a degenerate map the reference is no longer
                        // its own best match; keep the base map then.
                        let own = compare_lines(ref_text, ref_text, &adapted)?;
                        if adapted_scores.iter().all(|&s| s <= own) {
                            used_map = adapted;
                            scores = adapted_scores;
                        }
                    }
                }
            }
        }

        let cut = match gap_threshold(&scores) {
            Ok(_) if floor_met => Some(opts.min_similarity),
            Ok(t) => Some(t.max(opts.min_similarity)),
            // All partners score the same: they join when similar enough.
            Err(Error::NoGap) => Some(opts.min_similarity),
            Err(e) => return Err(e),
        };
        let mut members = vec![i];
        if let Some(cut) = cut {
            members.extend(
                others
                    .iter()
                    .zip(&scores)
                    .filter(|(_, s)| **s >= cut)
                    .map(|(&j, _)| j),
            );
        }
        members.sort_unstable();
        for &m in &members {
            owner[m] = Some(id);
        }
        let threshold = if members.len() > 1 { cut } else { None };

        let texts: Vec<&str> = members.iter().map(|&m| sample[m].1).collect();
        let (field_layout, key_name) = build_field_layout(&texts);
        set.templates.push(Template {
            id,
            reference_line: ref_idx,
            reference_text: ref_text.to_string(),
            members: members.iter().map(|&m| sample[m].0).collect(),
            threshold,
            adapted_map: used_map,
            field_layout,
            key_name,
            mask: build_mask(&texts),
            stats: ContentStats::of(&texts),
            role: Role::Body,
            creation_scores: others
                .iter()
                .zip(&scores)
                .map(|(&j, &s)| (sample[j].0, s))
                .collect(),
        });
    }

    let roles: Vec<Role> = set
        .templates
        .iter()
        .map(|t| classify_role(t, &set, &opts.role_rules))
        .collect();
    for (t, role) in set.templates.iter_mut().zip(roles) {
        t.role = role;
    }

    let series = TemplateSeries(
        sample
            .iter()
            .zip(&owner)
            .map(|(&(idx, _), id)| (idx + 1, id.expect("every sample line is marked")))
            .collect(),
    );
    Ok((set, series))
}

/// Best template for a line outside the sample, if any accepts it.
///
/// Each template scores the line against its reference with its own adapted
/// map; among the templates whose threshold is met, the highest score wins
/// (ties: lowest id). Singleton templates accept only their exact reference
/// text.
pub fn match_line(line: &str, ts: &TemplateSet) -> Option<TemplateId> {
    let line = line.trim_end();
    if line.trim().is_empty() {
        return None;
    }
    let mut best: Option<(TemplateId, f64)> = None;
    for t in &ts.templates {
        let score = match compare_lines(&t.reference_text, line, &t.adapted_map) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let accepted = match t.threshold {
            Some(th) => score >= th,
            None => t.reference_text.trim_end() == line,
        };
        if accepted && best.is_none_or(|(_, b)| score > b) {
            best = Some((t.id, score));
        }
    }
    best.map(|(id, _)| id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(gap_threshold(&[5.0, 90.0]).unwrap(), 47.5);
        assert_eq!(gap_threshold(&[10.0, 20.0, 80.0, 81.0]).unwrap(), 50.0);
        assert_eq!(gap_threshold(&[3.0, 19.0, 44.0, 87.0, 90.0]).unwrap(), 65.5);
        // duplicates collapse before the search
        assert_eq!(gap_threshold(&[5.0, 5.0, 90.0, 90.0]).unwrap(), 47.5);
        // equal gaps: the highest one wins
        assert_eq!(gap_threshold(&[0.0, 10.0, 20.0]).unwrap(), 15.0);
        assert!(matches!(gap_threshold(&[7.0, 7.0]), Err(Error::NoGap)));
        assert!(matches!(gap_threshold(&[]), Err(Error::NoGap)));
    }

    #[test]
    fn layouts() {
        let (f, k) = build_field_layout(&["AB  12", "CD  99"]);
        assert_eq!(f, vec![FieldSpan { start: 1, end: 2 }, FieldSpan { start: 5, end: 6 }]);
        assert_eq!(k, "1-5");
        let (f, k) = build_field_layout(&["X 1", "XX1"]);
        assert_eq!(f, vec![FieldSpan { start: 1, end: 3 }]);
        assert_eq!(k, "1");
        let (f, k) = build_field_layout(&["   ", ""]);
        assert!(f.is_empty());
        assert_eq!(k, "");
    }

    #[test]
    fn masks() {
        let m = build_mask(&["CT", "CT"]);
        assert_eq!(m[0].literal, Some('C'));
        assert_eq!(m[1].literal, Some('T'));
        let m = build_mask(&["12", "A2"]);
        assert_eq!(m[0].literal, None);
        assert_eq!(
            m[0].classes,
            [CharClass::Alpha, CharClass::Numeric].into_iter().collect()
        );
        assert!(!m[0].optional);
        assert_eq!(m[1].literal, Some('2'));
        let m = build_mask(&["A1", "A"]);
        assert!(m[1].optional);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn span_extract() {
        let span = FieldSpan { start: 3, end: 5 };
        assert_eq!(span.extract("ab cd ef"), "cd");
        assert_eq!(span.extract("ab"), "");
        assert_eq!(span.extract("abcd"), "cd");
    }

    #[test]
    fn single_line_document() {
        let (ts, series) =
            detect_templates(&["HELLO 123"], &FeatureScoreMap::default(), &DetectOptions::default())
                .unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.templates[0].members, vec![0]);
        assert_eq!(ts.templates[0].threshold, None);
        assert_eq!(series.0, vec![(1, 0)]);
    }

    #[test]
    fn empty_document() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            detect_templates(&empty, &FeatureScoreMap::default(), &DetectOptions::default()),
            Err(Error::EmptyDocument)
        ));
        assert!(matches!(
            detect_templates(&["", "   "], &FeatureScoreMap::default(), &DetectOptions::default()),
            Err(Error::EmptyDocument)
        ));
    }

    #[test]
    fn blank_lines_skipped_in_series() {
        let lines = ["AAA 111", "", "BBB 222"];
        let (_, series) =
            detect_templates(&lines, &FeatureScoreMap::default(), &DetectOptions::default()).unwrap();
        assert_eq!(series.0.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn two_formats() {
        let lines = [
            "ITEM  00123  WIDGET      12.50",
            "ITEM  00987  GADGET       3.75",
            "      -----  ------      -----",
            "ITEM  00555  SPROCKET    99.10",
            "TOTAL                   115.35",
        ];
        let (ts, series) =
            detect_templates(&lines, &FeatureScoreMap::default(), &DetectOptions::default()).unwrap();
        assert_eq!(series.ids()[0], series.ids()[1]);
        assert_eq!(series.ids()[0], series.ids()[3]);
        assert_ne!(series.ids()[0], series.ids()[2]);
        assert_eq!(ts.templates[series.ids()[2]].role, Role::Decor);
        assert_eq!(ts.templates[0].role, Role::Detail);
        assert_eq!(match_line("ITEM  00321  BOLT         0.10", &ts), Some(0));
        assert_eq!(match_line("zz", &ts), None);
    }

    #[test]
    fn roles_by_rule_order() {
        let rules = RoleRules::default();
        let mk = |id, texts: &[&str], count: usize| Template {
            id,
            reference_line: 0,
            reference_text: texts[0].to_string(),
            members: (0..count).collect(),
            threshold: None,
            adapted_map: FeatureScoreMap::default(),
            field_layout: vec![],
            key_name: String::new(),
            mask: vec![],
            stats: ContentStats::of(texts),
            role: Role::Body,
            creation_scores: vec![],
        };
        let set = TemplateSet {
            templates: vec![
                mk(0, &["----- -----"], 3),
                mk(1, &["NAME  CITY", "NAME  CITY"], 3),
                mk(2, &["A 12", "B 13"], 5),
                mk(3, &["PAGE 1", "PAGE 2"], 3),
                mk(4, &["DATE 2017-09-20", "DATE 2017-09-20"], 3),
            ],
        };
        let roles: Vec<Role> = set
            .templates
            .iter()
            .map(|t| classify_role(t, &set, &rules))
            .collect();
        assert_eq!(
            roles,
            vec![Role::Decor, Role::Heading, Role::Detail, Role::Body, Role::Body]
        );
    }
}
