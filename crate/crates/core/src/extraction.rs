//! Extraction plan and record extraction.
//!
//! The plan is derived from the first structure that contains a detail
//! template: the detail pattern yields one record per instance, the header and
//! footer templates of each enclosing level contribute group fields, and body
//! templates of the other structures (page headers) contribute page fields.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hierarchy::HierarchyResult;
use crate::templates::{match_line, FieldSpan, Role, TemplateId, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingKind {
    Header,
    Footer,
    Page,
}

/// Fields of one template feeding output columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Binding {
    pub template_id: TemplateId,
    pub kind: BindingKind,
    /// Hierarchy level (1 = parent of the detail level); 0 for page bindings.
    pub level: usize,
    /// Position within the level's header or footer.
    pub position: usize,
    pub fields: Vec<FieldSpan>,
    /// Indices into [`ExtractionPlan::columns`], parallel to `fields`.
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelBindings {
    pub level: usize,
    pub headers: Vec<Binding>,
    pub footers: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractionPlan {
    /// Detail templates in pattern order.
    pub detail_templates: Vec<TemplateId>,
    /// One binding per detail template (kind `Header`, level 0).
    pub details: Vec<Binding>,
    /// Levels 1.. from the detail level outwards.
    pub levels: Vec<LevelBindings>,
    pub page_bindings: Vec<Binding>,
    pub columns: Vec<String>,
}

impl ExtractionPlan {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn bind(
    ts: &TemplateSet,
    id: TemplateId,
    kind: BindingKind,
    level: usize,
    position: usize,
    prefix: &str,
    columns: &mut Vec<String>,
) -> Binding {
    let fields = ts.get(id).map(|t| t.field_layout.clone()).unwrap_or_default();
    let cols = fields
        .iter()
        .map(|f| {
            columns.push(format!("{prefix}_T{id}_C{}", f.start));
            columns.len() - 1
        })
        .collect();
    Binding {
        template_id: id,
        kind,
        level,
        position,
        fields,
        columns: cols,
    }
}

/// Builds the extraction plan for a template set and its hierarchy.
pub fn build_plan(ts: &TemplateSet, h: &HierarchyResult) -> Result<ExtractionPlan> {
    let is_detail = |id: &TemplateId| ts.get(*id).is_some_and(|t| t.role == Role::Detail);
    let primary = h
        .structures
        .iter()
        .position(|s| s.pattern.detail_level().header.iter().any(is_detail))
        .ok_or(Error::NoDetailLevel)?;
    let pattern = &h.structures[primary].pattern;
    let mut columns = Vec::new();

    let detail_templates = pattern.detail_level().header.clone();
    let details = detail_templates
        .iter()
        .enumerate()
        .map(|(pos, &id)| bind(ts, id, BindingKind::Header, 0, pos, "D", &mut columns))
        .collect();

    let mut levels = Vec::new();
    for (level, p) in pattern.levels().into_iter().enumerate().skip(1) {
        let headers = p
            .header
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                bind(ts, id, BindingKind::Header, level, pos, &format!("L{level}_H"), &mut columns)
            })
            .collect();
        let footers = p
            .footer
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                bind(ts, id, BindingKind::Footer, level, pos, &format!("L{level}_F"), &mut columns)
            })
            .collect();
        levels.push(LevelBindings {
            level,
            headers,
            footers,
        });
    }

    let mut page_bindings = Vec::new();
    for (i, s) in h.structures.iter().enumerate() {
        if i == primary {
            continue;
        }
        for id in s.pattern.template_ids() {
            if ts.get(id).is_some_and(|t| t.role == Role::Body) {
                let pos = page_bindings.len();
                page_bindings.push(bind(ts, id, BindingKind::Page, 0, pos, "P", &mut columns));
            }
        }
    }

    Ok(ExtractionPlan {
        detail_templates,
        details,
        levels,
        page_bindings,
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Record {
    /// Values parallel to the plan's columns; missing values are empty.
    pub values: Vec<String>,
    /// 1-based lines that contributed to the record.
    pub lines: Vec<usize>,
    /// Instance index of the enclosing group at each level (index 0 = level 1).
    pub groups: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Extraction {
    pub records: Vec<Record>,
    /// Non-blank lines no template accepted.
    pub skipped: usize,
    /// Detail instances missing some of their templates.
    pub incomplete: usize,
}

#[derive(Clone, Copy)]
enum Slot {
    Detail(usize),
    Header(usize, usize),
    Footer(usize, usize),
    Page(usize),
}

struct Partial {
    values: Vec<String>,
    lines: Vec<usize>,
    filled: Vec<bool>,
    last: usize,
}

struct Extractor<'a> {
    plan: &'a ExtractionPlan,
    /// Latest header and page values, by column.
    context: Vec<String>,
    partial: Option<Partial>,
    buffer: Vec<Record>,
    out: Extraction,
    instance: Vec<usize>,
    started: Vec<bool>,
}

impl<'a> Extractor<'a> {
    fn new(plan: &'a ExtractionPlan) -> Self {
        let levels = plan.levels.len();
        Extractor {
            plan,
            context: vec![String::new(); plan.columns.len()],
            partial: None,
            buffer: Vec::new(),
            out: Extraction::default(),
            instance: vec![0; levels],
            started: vec![false; levels],
        }
    }

    fn fill(values: &mut [String], binding: &Binding, line: &str) {
        for (span, &col) in binding.fields.iter().zip(&binding.columns) {
            values[col] = span.extract(line).to_string();
        }
    }

    fn finish_partial(&mut self) {
        let Some(p) = self.partial.take() else {
            return;
        };
        if p.filled.iter().any(|f| !f) {
            self.out.incomplete += 1;
        }
        let mut values = self.context.clone();
        for b in &self.plan.details {
            for &col in &b.columns {
                values[col] = p.values[col].clone();
            }
        }
        // Footer columns are attached later, never inherited.
        for l in &self.plan.levels {
            for b in &l.footers {
                for &col in &b.columns {
                    values[col].clear();
                }
            }
        }
        for s in &mut self.started {
            *s = true;
        }
        self.buffer.push(Record {
            values,
            lines: p.lines,
            groups: self.instance.clone(),
        });
    }

    /// Ends the current instance of `level` (1-based) and of every level below.
    fn close(&mut self, level: usize) {
        for l in 0..level {
            if self.started[l] {
                self.instance[l] += 1;
                self.started[l] = false;
            }
            for b in &self.plan.levels[l].headers {
                for &col in &b.columns {
                    self.context[col].clear();
                }
            }
        }
        self.flush_ready();
    }

    /// Emits buffered records whose footer-bearing groups have all closed.
    fn flush_ready(&mut self) {
        let ready = |r: &Record, instance: &[usize], plan: &ExtractionPlan| {
            plan.levels
                .iter()
                .enumerate()
                .all(|(l, lb)| lb.footers.is_empty() || r.groups[l] < instance[l])
        };
        let n = self
            .buffer
            .iter()
            .take_while(|r| ready(r, &self.instance, self.plan))
            .count();
        self.out.records.extend(self.buffer.drain(..n));
    }

    fn line(&mut self, slot: Slot, line_no: usize, text: &str) {
        match slot {
            Slot::Detail(pos) => {
                if self.partial.as_ref().is_some_and(|p| pos <= p.last) {
                    self.finish_partial();
                }
                let plan = self.plan;
                let p = self.partial.get_or_insert_with(|| Partial {
                    values: vec![String::new(); plan.columns.len()],
                    lines: Vec::new(),
                    filled: vec![false; plan.details.len()],
                    last: 0,
                });
                Self::fill(&mut p.values, &plan.details[pos], text);
                p.lines.push(line_no);
                p.filled[pos] = true;
                p.last = pos;
            }
            Slot::Header(level, pos) => {
                self.finish_partial();
                let plan = self.plan;
                if pos == 0 {
                    self.close(level);
                }
                self.started[level - 1] = true;
                Self::fill(&mut self.context, &plan.levels[level - 1].headers[pos], text);
            }
            Slot::Footer(level, pos) => {
                self.finish_partial();
                let plan = self.plan;
                let binding = &plan.levels[level - 1].footers[pos];
                let current = self.instance[level - 1];
                for r in self.buffer.iter_mut().filter(|r| r.groups[level - 1] == current) {
                    Self::fill(&mut r.values, binding, text);
                }
                if pos + 1 == plan.levels[level - 1].footers.len() {
                    self.started[level - 1] = true;
                    self.close(level);
                }
            }
            Slot::Page(i) => {
                let plan = self.plan;
                Self::fill(&mut self.context, &plan.page_bindings[i], text);
            }
        }
    }

    fn finish(mut self) -> Extraction {
        self.finish_partial();
        self.out.records.append(&mut self.buffer);
        self.out
    }
}

fn slots(plan: &ExtractionPlan) -> BTreeMap<TemplateId, Slot> {
    let mut map = BTreeMap::new();
    for b in &plan.page_bindings {
        map.insert(b.template_id, Slot::Page(b.position));
    }
    for l in &plan.levels {
        for b in &l.headers {
            map.insert(b.template_id, Slot::Header(l.level, b.position));
        }
        for b in &l.footers {
            map.insert(b.template_id, Slot::Footer(l.level, b.position));
        }
    }
    for b in &plan.details {
        map.insert(b.template_id, Slot::Detail(b.position));
    }
    map
}

/// Extracts records from lines whose templates are already known.
/// `assigned[i]` is the template of line `i + 1`, if any.
pub fn extract_assigned<S: AsRef<str>>(
    lines: &[S],
    assigned: &[Option<TemplateId>],
    plan: &ExtractionPlan,
) -> Extraction {
    let slots = slots(plan);
    let mut ex = Extractor::new(plan);
    for (i, line) in lines.iter().enumerate() {
        let text = line.as_ref();
        match assigned.get(i).copied().flatten() {
            Some(t) => {
                if let Some(&slot) = slots.get(&t) {
                    ex.line(slot, i + 1, text);
                }
            }
            None if !text.trim().is_empty() => ex.out.skipped += 1,
            None => {}
        }
    }
    ex.finish()
}

/// Matches every line against the template set and extracts records.
pub fn extract<S: AsRef<str>>(lines: &[S], ts: &TemplateSet, plan: &ExtractionPlan) -> Extraction {
    let assigned: Vec<Option<TemplateId>> =
        lines.iter().map(|l| match_line(l.as_ref(), ts)).collect();
    extract_assigned(lines, &assigned, plan)
}

pub fn write_csv<W: Write>(w: W, plan: &ExtractionPlan, records: &[Record]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&plan.columns)?;
    for r in records {
        out.write_record(&r.values)?;
    }
    out.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

pub fn record_json(plan: &ExtractionPlan, r: &Record) -> Value {
    let mut obj = Map::new();
    for (name, value) in plan.columns.iter().zip(&r.values) {
        obj.insert(name.clone(), Value::String(value.clone()));
    }
    obj.insert("_lines".into(), Value::from(r.lines.clone()));
    obj.insert("_groups".into(), Value::from(r.groups.clone()));
    Value::Object(obj)
}

pub fn write_jsonl<W: Write>(mut w: W, plan: &ExtractionPlan, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &record_json(plan, r))?;
        w.write_all(b"\n").map_err(|e| Error::io("<records>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_hierarchy, Pattern, Structure};
    use crate::scoring::FeatureScoreMap;
    use crate::templates::{detect_templates, DetectOptions, Template};

    fn fake_set(roles: &[Role], layouts: &[Vec<FieldSpan>]) -> TemplateSet {
        let templates = roles
            .iter()
            .zip(layouts)
            .enumerate()
            .map(|(id, (&role, layout))| Template {
                id,
                reference_line: 0,
                reference_text: String::new(),
                members: vec![],
                threshold: None,
                adapted_map: FeatureScoreMap::default(),
                field_layout: layout.clone(),
                key_name: String::new(),
                mask: vec![],
                stats: crate::templates::ContentStats::of(&[]),
                role,
                creation_scores: vec![],
            })
            .collect();
        TemplateSet { templates }
    }

    fn span(start: usize, end: usize) -> FieldSpan {
        FieldSpan { start, end }
    }

    fn invoice() -> (TemplateSet, HierarchyResult) {
        use Role::*;
        let ts = fake_set(
            &[Heading, Body, Body, Detail, Body, Body],
            &vec![vec![span(1, 4)]; 6],
        );
        let h = HierarchyResult {
            structures: vec![
                Structure {
                    pattern: Pattern::wrap(vec![2], Pattern::detail(vec![3]), vec![4]),
                    collapse_iterations: 2,
                },
                Structure {
                    pattern: Pattern::detail(vec![1, 5]),
                    collapse_iterations: 1,
                },
            ],
            noise_log: vec![],
            residue: vec![],
        };
        (ts, h)
    }

    #[test]
    fn invoice_plan() {
        let (ts, h) = invoice();
        let plan = build_plan(&ts, &h).unwrap();
        assert_eq!(plan.detail_templates, vec![3]);
        assert_eq!(plan.levels.len(), 1);
        assert_eq!(plan.levels[0].headers[0].template_id, 2);
        assert_eq!(plan.levels[0].footers[0].template_id, 4);
        let page: Vec<_> = plan.page_bindings.iter().map(|b| b.template_id).collect();
        assert_eq!(page, vec![1, 5]);
        assert_eq!(
            plan.columns,
            vec!["D_T3_C1", "L1_H_T2_C1", "L1_F_T4_C1", "P_T1_C1", "P_T5_C1"]
        );
    }

    #[test]
    fn detail_only_plan() {
        let ts = fake_set(&[Role::Detail], &[vec![span(1, 2)]]);
        let h = HierarchyResult {
            structures: vec![Structure {
                pattern: Pattern::detail(vec![0]),
                collapse_iterations: 1,
            }],
            ..Default::default()
        };
        let plan = build_plan(&ts, &h).unwrap();
        assert!(plan.levels.is_empty() && plan.page_bindings.is_empty());
    }

    #[test]
    fn no_detail_level() {
        let ts = fake_set(&[Role::Body], &[vec![span(1, 2)]]);
        let h = HierarchyResult {
            structures: vec![Structure {
                pattern: Pattern::detail(vec![0]),
                collapse_iterations: 1,
            }],
            ..Default::default()
        };
        assert!(matches!(build_plan(&ts, &h), Err(Error::NoDetailLevel)));
    }

    #[test]
    fn footers_attach_to_their_group() {
        let (ts, h) = invoice();
        let plan = build_plan(&ts, &h).unwrap();
        let lines = ["G1", "a", "b", "F1", "G2", "c", "F2", "G3", "d"];
        let assigned = [2, 3, 3, 4, 2, 3, 4, 2, 3].map(Some);
        let ex = extract_assigned(&lines, &assigned, &plan);
        let view: Vec<(&str, &str, &str)> = ex
            .records
            .iter()
            .map(|r| (r.values[0].as_str(), r.values[1].as_str(), r.values[2].as_str()))
            .collect();
        assert_eq!(
            view,
            vec![
                ("a", "G1", "F1"),
                ("b", "G1", "F1"),
                ("c", "G2", "F2"),
                ("d", "G3", ""),
            ]
        );
        assert_eq!(ex.records[0].lines, vec![2]);
        assert_eq!(ex.records[3].groups, vec![2]);
    }

    #[test]
    fn empty_document() {
        let (ts, h) = invoice();
        let plan = build_plan(&ts, &h).unwrap();
        let lines: [&str; 0] = [];
        let ex = extract_assigned(&lines, &[], &plan);
        assert_eq!((ex.records.len(), ex.skipped), (0, 0));
    }

    #[test]
    fn incomplete_detail_counts_warning() {
        let ts = fake_set(
            &[Role::Detail, Role::Detail],
            &[vec![span(1, 2)], vec![span(1, 2)]],
        );
        let h = HierarchyResult {
            structures: vec![Structure {
                pattern: Pattern::detail(vec![0, 1]),
                collapse_iterations: 1,
            }],
            ..Default::default()
        };
        let plan = build_plan(&ts, &h).unwrap();
        let lines = ["a1", "b1", "a2", "a3", "b3", "zz"];
        let assigned = [Some(0), Some(1), Some(0), Some(0), Some(1), None];
        let ex = extract_assigned(&lines, &assigned, &plan);
        assert_eq!(ex.records.len(), 3);
        assert_eq!(ex.incomplete, 1);
        assert_eq!(ex.skipped, 1);
        assert_eq!(ex.records[1].values, vec!["a2".to_string(), String::new()]);
    }

    #[test]
    fn text_roundtrip() {
        let lines = [
            "HDR  alpha", "  10 x", "  11 y", "TOT 21", "HDR  beta", "  12 z", "TOT 12",
        ];
        let opts = DetectOptions::default();
        let (ts, series) = detect_templates(&lines, &FeatureScoreMap::default(), &opts).unwrap();
        let h = build_hierarchy(&series.ids(), &ts.detail_ids()).unwrap();
        let plan = build_plan(&ts, &h).unwrap();
        let ex = extract(&lines, &ts, &plan);
        assert_eq!(ex.records.len(), 3);
        let mut csv = Vec::new();
        write_csv(&mut csv, &plan, &ex.records).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        let mut jsonl = Vec::new();
        write_jsonl(&mut jsonl, &plan, &ex.records).unwrap();
        let first: Value =
            serde_json::from_str(String::from_utf8(jsonl).unwrap().lines().next().unwrap())
                .unwrap();
        assert_eq!(first["_lines"], serde_json::json!([2]));
    }
}
