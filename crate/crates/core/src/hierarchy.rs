//! Hierarchy of repeating patterns in a template number series.
//!
//! Starting from the detail templates, the series is repeatedly *collapsed*
//! (each run of consecutive pattern instances becomes one reference symbol)
//! and the parent pattern is grown around the reference from the symbols that
//! consistently precede and follow it. Templates that break that consistency
//! are removed as noise and the process restarts. Removed templates are then
//! analyzed on their own, which typically yields page header/footer
//! structures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::templates::TemplateId;

/// Element of a (possibly collapsed) series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Template(TemplateId),
    /// Opaque reference to a collapsed pattern run.
    Ref(usize),
}

impl Symbol {
    pub fn template(self) -> Option<TemplateId> {
        match self {
            Symbol::Template(t) => Some(t),
            Symbol::Ref(_) => None,
        }
    }
}

pub fn to_symbols(ids: &[TemplateId]) -> Vec<Symbol> {
    ids.iter().copied().map(Symbol::Template).collect()
}

/// A repeating pattern: header templates, an optional child pattern and
/// footer templates. A pattern without a child is a detail pattern and lists
/// its templates in `header`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub header: Vec<TemplateId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub child: Option<Box<Pattern>>,
    pub footer: Vec<TemplateId>,
}

impl Pattern {
    pub fn detail(ids: Vec<TemplateId>) -> Self {
        Pattern {
            header: ids,
            child: None,
            footer: Vec::new(),
        }
    }

    pub fn wrap(header: Vec<TemplateId>, child: Pattern, footer: Vec<TemplateId>) -> Self {
        Pattern {
            header,
            child: Some(Box::new(child)),
            footer,
        }
    }

    /// Number of nested levels (a detail pattern has depth 1).
    pub fn depth(&self) -> usize {
        1 + self.child.as_ref().map_or(0, |c| c.depth())
    }

    /// Patterns from the innermost (detail) level outwards.
    pub fn levels(&self) -> Vec<&Pattern> {
        let mut out = match &self.child {
            Some(c) => c.levels(),
            None => Vec::new(),
        };
        out.push(self);
        out
    }

    pub fn detail_level(&self) -> &Pattern {
        match &self.child {
            Some(c) => c.detail_level(),
            None => self,
        }
    }

    /// Every template id in the pattern, in rendering order.
    pub fn template_ids(&self) -> Vec<TemplateId> {
        let mut out = self.header.clone();
        if let Some(c) = &self.child {
            out.extend(c.template_ids());
        }
        out.extend(&self.footer);
        out
    }

    /// Expands one instance of the pattern (each child once).
    pub fn expand_once(&self) -> Vec<TemplateId> {
        self.template_ids()
    }

    pub fn render(&self) -> String {
        let mut items: Vec<String> = self.header.iter().map(|t| t.to_string()).collect();
        if let Some(c) = &self.child {
            items.push(c.render());
        }
        items.extend(self.footer.iter().map(|t| t.to_string()));
        format!("[{}]", items.join(", "))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Replaces every maximal run of consecutive `motif` occurrences with a single
/// `reference`. Matching is leftmost-first and non-overlapping.
pub fn collapse_runs(series: &[Symbol], motif: &[Symbol], reference: Symbol) -> Vec<Symbol> {
    collapse_impl(series, motif, reference, None)
}

/// Like [`collapse_runs`], but a truncated instance at either end of the
/// series (a suffix of the motif at the start, a prefix at the end) still
/// counts, provided it contains the motif's child reference at `child_pos`.
fn collapse_with_edges(
    series: &[Symbol],
    motif: &[Symbol],
    reference: Symbol,
    child_pos: usize,
) -> Vec<Symbol> {
    collapse_impl(series, motif, reference, Some(child_pos))
}

fn collapse_impl(
    series: &[Symbol],
    motif: &[Symbol],
    reference: Symbol,
    edges: Option<usize>,
) -> Vec<Symbol> {
    let n = series.len();
    let m = motif.len();
    if m == 0 {
        return series.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut in_run = false;
    if let Some(child_pos) = edges {
        for k in 1..=child_pos.min(m - 1) {
            let suffix = &motif[k..];
            if series.starts_with(suffix) {
                out.push(reference);
                in_run = true;
                i = suffix.len();
                break;
            }
        }
    }
    while i < n {
        if series[i..].starts_with(motif) {
            if !in_run {
                out.push(reference);
                in_run = true;
            }
            i += m;
            continue;
        }
        if let Some(child_pos) = edges {
            let rest = &series[i..];
            if rest.len() < m && rest.len() > child_pos && motif.starts_with(rest) {
                if !in_run {
                    out.push(reference);
                }
                break;
            }
        }
        out.push(series[i]);
        in_run = false;
        i += 1;
    }
    out
}

fn count_full_occurrences(series: &[Symbol], motif: &[Symbol]) -> usize {
    if motif.is_empty() || motif.len() > series.len() {
        return 0;
    }
    series.windows(motif.len()).filter(|w| *w == motif).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Header,
    Footer,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Header => "header",
            Side::Footer => "footer",
        })
    }
}

/// Contexts around a reference that did not agree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub side: Side,
    /// Distance from the reference symbol, starting at 1.
    pub offset: usize,
    /// Template seen at that offset -> number of occurrences.
    pub counts: BTreeMap<TemplateId, usize>,
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let counts: Vec<String> = self.counts.iter().map(|(t, n)| format!("{t}:{n}")).collect();
        write!(f, "{} offset {} {{{}}}", self.side, self.offset, counts.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Growth {
    pub header: Vec<TemplateId>,
    pub footer: Vec<TemplateId>,
    pub disagreements: Vec<Disagreement>,
}

enum Probe {
    Extend {
        symbol: TemplateId,
        support: usize,
        at_start_wildcard: bool,
    },
    Disagree(BTreeMap<TemplateId, usize>),
    Stop,
}

/// Looks one symbol further out on `side` of every occurrence.
fn probe(series: &[Symbol], occ: &[usize], side: Side, h: usize, f: usize) -> Probe {
    let mut counts: BTreeMap<TemplateId, usize> = BTreeMap::new();
    let mut at_start_wildcard = false;
    for (k, &o) in occ.iter().enumerate() {
        let pos = match side {
            Side::Header => {
                let Some(p) = o.checked_sub(h + 1) else {
                    if k == 0 {
                        at_start_wildcard = true;
                    }
                    continue;
                };
                if k > 0 && p <= occ[k - 1] + f {
                    return Probe::Stop;
                }
                p
            }
            Side::Footer => {
                let p = o + f + 1;
                if p >= series.len() {
                    continue;
                }
                if k + 1 < occ.len() && p + h >= occ[k + 1] {
                    return Probe::Stop;
                }
                p
            }
        };
        match series[pos] {
            Symbol::Template(t) => *counts.entry(t).or_default() += 1,
            Symbol::Ref(_) => return Probe::Stop,
        }
    }
    match counts.len() {
        0 => Probe::Stop,
        1 => {
            let (&symbol, &support) = counts.iter().next().expect("one entry");
            // A lone context is no evidence of repetition.
            if support < occ.len().min(2) {
                return Probe::Stop;
            }
            Probe::Extend {
                symbol,
                support,
                at_start_wildcard,
            }
        }
        _ => Probe::Disagree(counts),
    }
}

/// Grows the parent pattern around every occurrence of `reference`.
///
/// The header is the longest run of templates found immediately before every
/// occurrence, the footer likewise after it. The series boundaries act as
/// wildcards, and growth never claims a symbol already claimed by a
/// neighbouring occurrence. When both sides can grow, the one supported by
/// more occurrences goes first; on a tie the header goes first unless the
/// first occurrence sits at the very start of the series. A side whose
/// contexts disagree stops, and the disagreement is reported.
pub fn grow_parent(series: &[Symbol], reference: Symbol) -> Growth {
    let occ: Vec<usize> = series
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == reference)
        .map(|(i, _)| i)
        .collect();
    let mut growth = Growth::default();
    if occ.is_empty() {
        return growth;
    }
    loop {
        let (h, f) = (growth.header.len(), growth.footer.len());
        let hp = probe(series, &occ, Side::Header, h, f);
        let fp = probe(series, &occ, Side::Footer, h, f);
        let pick = match (&hp, &fp) {
            (
                Probe::Extend {
                    support: hs,
                    at_start_wildcard,
                    ..
                },
                Probe::Extend { support: fs, .. },
            ) => {
                if hs > fs || (hs == fs && !at_start_wildcard) {
                    Side::Header
                } else {
                    Side::Footer
                }
            }
            (Probe::Extend { .. }, _) => Side::Header,
            (_, Probe::Extend { .. }) => Side::Footer,
            _ => {
                for (side, p, offset) in [(Side::Header, hp, h + 1), (Side::Footer, fp, f + 1)] {
                    if let Probe::Disagree(counts) = p {
                        growth.disagreements.push(Disagreement {
                            side,
                            offset,
                            counts,
                        });
                    }
                }
                return growth;
            }
        };
        match (pick, hp, fp) {
            (Side::Header, Probe::Extend { symbol, .. }, _) => growth.header.insert(0, symbol),
            (Side::Footer, _, Probe::Extend { symbol, .. }) => growth.footer.push(symbol),
            _ => unreachable!("picked side always extends"),
        }
    }
}

fn frequencies(series: &[Symbol]) -> BTreeMap<TemplateId, usize> {
    let mut freq = BTreeMap::new();
    for t in series.iter().filter_map(|s| s.template()) {
        *freq.entry(t).or_insert(0) += 1;
    }
    freq
}

/// Chooses a template to remove as noise from the reported disagreements.
///
/// A disagreement where one template accounts for at least two thirds of the
/// contexts marks every other template seen there as a noise candidate. The
/// candidate with the lowest frequency in `series` is returned (ties: higher
/// id). Without such a majority the pattern simply ends there.
pub fn pick_noise(disagreements: &[Disagreement], series: &[Symbol]) -> Option<TemplateId> {
    pick_noise_excluding(disagreements, series, &BTreeSet::new())
}

fn pick_noise_excluding(
    disagreements: &[Disagreement],
    series: &[Symbol],
    protected: &BTreeSet<TemplateId>,
) -> Option<TemplateId> {
    let freq = frequencies(series);
    let mut candidates = BTreeSet::new();
    for d in disagreements {
        let total: usize = d.counts.values().sum();
        let Some((&major, &count)) = d.counts.iter().max_by_key(|(t, n)| (**n, std::cmp::Reverse(**t)))
        else {
            continue;
        };
        if 3 * count < 2 * total {
            continue;
        }
        candidates.extend(
            d.counts
                .keys()
                .copied()
                .filter(|t| *t != major && !protected.contains(t)),
        );
    }
    candidates
        .into_iter()
        .min_by(|a, b| {
            let fa = freq.get(a).copied().unwrap_or(0);
            let fb = freq.get(b).copied().unwrap_or(0);
            fa.cmp(&fb).then(b.cmp(a))
        })
}

/// One noise removal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRemoval {
    pub template_id: TemplateId,
    pub reason: String,
}

/// A discovered structure and the collapse iterations its final pass took.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub pattern: Pattern,
    pub collapse_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyResult {
    /// First the structure holding the detail templates, then structures
    /// found among the removed templates.
    pub structures: Vec<Structure>,
    pub noise_log: Vec<NoiseRemoval>,
    /// Templates that fit no structure.
    pub residue: Vec<TemplateId>,
}

impl HierarchyResult {
    pub fn dss(&self) -> String {
        render_dss(self)
    }

    pub fn primary(&self) -> Option<&Pattern> {
        self.structures.first().map(|s| &s.pattern)
    }
}

pub fn render_dss(r: &HierarchyResult) -> String {
    r.structures
        .iter()
        .map(|s| s.pattern.render())
        .collect::<Vec<_>>()
        .join(" / ")
}

/// The order in which the detail templates first appear together.
fn detail_seed(series: &[TemplateId], detail_ids: &BTreeSet<TemplateId>) -> Vec<TemplateId> {
    let k = detail_ids.len();
    let mut i = 0;
    while i < series.len() {
        if !detail_ids.contains(&series[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < series.len() && detail_ids.contains(&series[i]) {
            i += 1;
        }
        let run = &series[start..i];
        for window in run.windows(k) {
            let set: BTreeSet<TemplateId> = window.iter().copied().collect();
            if set.len() == k {
                return window.to_vec();
            }
        }
    }
    // No joint run: fall back to the order of first appearance.
    let mut seen = BTreeSet::new();
    series
        .iter()
        .copied()
        .filter(|t| detail_ids.contains(t) && seen.insert(*t))
        .collect()
}

/// Outcome of one structure search.
struct StructureSearch {
    pattern: Pattern,
    removed: Vec<NoiseRemoval>,
    collapse_iterations: usize,
}

/// Finds the hierarchy grown from `seed`, removing noise templates and
/// restarting after each removal.
fn build_structure(series: &[TemplateId], seed: &[TemplateId]) -> StructureSearch {
    let protected_seed: BTreeSet<TemplateId> = seed.iter().copied().collect();
    let mut removed: Vec<NoiseRemoval> = Vec::new();
    let mut removed_ids: BTreeSet<TemplateId> = BTreeSet::new();
    // Each restart removes one template, so this loop runs at most once per
    // distinct template.
    'restart: loop {
        let mut current: Vec<Symbol> = series
            .iter()
            .filter(|t| !removed_ids.contains(t))
            .map(|&t| Symbol::Template(t))
            .collect();
        let mut pattern = Pattern::detail(seed.to_vec());
        let mut motif = to_symbols(seed);
        let mut child_pos: Option<usize> = None;
        let mut iterations = 0;
        let mut protected = protected_seed.clone();
        for next_ref in 0.. {
            let reference = Symbol::Ref(next_ref);
            let collapsed = match child_pos {
                Some(pos) => collapse_with_edges(&current, &motif, reference, pos),
                None => collapse_runs(&current, &motif, reference),
            };
            iterations += 1;
            if collapsed.len() <= 1 {
                break;
            }
            let growth = grow_parent(&collapsed, reference);
            if let Some(noise) =
                pick_noise_excluding(&growth.disagreements, &collapsed, &protected)
            {
                let reason = growth
                    .disagreements
                    .iter()
                    .map(|d| format!("level {} {}", next_ref + 1, d))
                    .collect::<Vec<_>>()
                    .join("; ");
                removed.push(NoiseRemoval {
                    template_id: noise,
                    reason,
                });
                removed_ids.insert(noise);
                continue 'restart;
            }
            if growth.header.is_empty() && growth.footer.is_empty() {
                break;
            }
            let mut next_motif = to_symbols(&growth.header);
            next_motif.push(reference);
            next_motif.extend(to_symbols(&growth.footer));
            if count_full_occurrences(&collapsed, &next_motif) == 0 {
                break;
            }
            protected.extend(growth.header.iter().chain(&growth.footer).copied());
            child_pos = Some(growth.header.len());
            pattern = Pattern::wrap(growth.header, pattern, growth.footer);
            motif = next_motif;
            current = collapsed;
        }
        return StructureSearch {
            pattern,
            removed,
            collapse_iterations: iterations,
        };
    }
}

/// The repeated motif covering the most of `series` with adjacent runs.
///
/// Candidates are primitive motifs (not themselves a repetition) occurring at
/// least twice in a row. Ties go to the shorter motif, then to the earlier
/// first run.
pub fn most_frequent_motif(series: &[TemplateId]) -> Option<Vec<TemplateId>> {
    let n = series.len();
    let mut coverage: BTreeMap<Vec<TemplateId>, (usize, usize)> = BTreeMap::new();
    for len in 1..=n / 2 {
        let mut i = 0;
        while i + 2 * len <= n {
            let motif = &series[i..i + len];
            let mut reps = 1;
            while i + (reps + 1) * len <= n && &series[i + reps * len..i + (reps + 1) * len] == motif {
                reps += 1;
            }
            if reps >= 2 && is_primitive(motif) {
                let e = coverage.entry(motif.to_vec()).or_insert((0, i));
                e.0 += reps * len;
                e.1 = e.1.min(i);
                i += reps * len;
            } else {
                i += 1;
            }
        }
    }
    coverage
        .into_iter()
        .max_by(|(ma, (ca, fa)), (mb, (cb, fb))| {
            ca.cmp(cb)
                .then(mb.len().cmp(&ma.len()))
                .then(fb.cmp(fa))
        })
        .map(|(m, _)| m)
}

fn is_primitive(motif: &[TemplateId]) -> bool {
    let n = motif.len();
    (1..n).all(|d| !n.is_multiple_of(d) || motif.chunks(d).any(|c| c != &motif[..d]))
}

/// Detects the repeating-pattern hierarchy of a template series.
pub fn build_hierarchy(series: &[TemplateId], detail_ids: &[TemplateId]) -> Result<HierarchyResult> {
    let details: BTreeSet<TemplateId> = detail_ids.iter().copied().collect();
    if details.is_empty() || !details.iter().all(|d| series.contains(d)) {
        return Err(Error::DetailAbsent(detail_ids.to_vec()));
    }
    let seed = detail_seed(series, &details);
    let mut result = HierarchyResult::default();

    let mut search = build_structure(series, &seed);
    let mut remaining: Vec<TemplateId> = series.to_vec();
    loop {
        let used: BTreeSet<TemplateId> = search.pattern.template_ids().into_iter().collect();
        result.noise_log.append(&mut search.removed);
        result.structures.push(Structure {
            pattern: search.pattern,
            collapse_iterations: search.collapse_iterations,
        });
        remaining.retain(|t| !used.contains(t));
        if remaining.is_empty() {
            break;
        }
        match most_frequent_motif(&remaining) {
            Some(motif) => search = build_structure(&remaining, &motif),
            None => {
                let residue: BTreeSet<TemplateId> = remaining.iter().copied().collect();
                result.residue = residue.into_iter().collect();
                break;
            }
        }
    }
    Ok(result)
}

/// Parses a comma-separated series literal such as `"1,2,3,3,4"`.
pub fn parse_series(text: &str) -> Result<Vec<TemplateId>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad series element {t:?}")))
        })
        .collect()
}
