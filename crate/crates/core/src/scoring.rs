//! Line-format similarity scoring.
//!
//! Two lines are compared column by column. Every column where at least one
//! line has a non-space character is *active*; some active columns also
//! produce a format event (a match or mismatch of a character class at a word
//! border or inside a word body). Each event kind has a weight in a
//! [`FeatureScoreMap`], and the score is the summed weight normalized by the
//! number of active columns and by the mean weight of the map:
//!
//! ```text
//! score = 100 * sum(weights of events) / (active_columns * mean(map))
//! ```
//!
//! The normalization makes the score independent of the map's absolute scale
//! and of the line length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Character class of a single column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharClass {
    Alpha,
    Numeric,
    Symbol,
    Space,
}

impl CharClass {
    /// Row of the score map for this class; `None` for [`CharClass::Space`].
    pub fn row(self) -> Option<usize> {
        match self {
            CharClass::Alpha => Some(0),
            CharClass::Numeric => Some(1),
            CharClass::Symbol => Some(2),
            CharClass::Space => None,
        }
    }

    pub fn from_row(row: usize) -> Option<CharClass> {
        match row {
            0 => Some(CharClass::Alpha),
            1 => Some(CharClass::Numeric),
            2 => Some(CharClass::Symbol),
            _ => None,
        }
    }
}

pub fn classify_char(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_ascii_digit() {
        CharClass::Numeric
    } else if c.is_alphabetic() {
        CharClass::Alpha
    } else {
        CharClass::Symbol
    }
}

/// Position of a column relative to the word (maximal non-space run) covering it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PositionRole {
    /// First or last character of a word. A one-character word is a border.
    Border,
    /// Interior character of a word.
    Body,
    /// Not covered by any word.
    Blank,
}

pub fn position_roles(line: &str) -> Vec<PositionRole> {
    let chars: Vec<char> = line.chars().collect();
    roles_of(&chars)
}

fn roles_of(chars: &[char]) -> Vec<PositionRole> {
    let mut roles = vec![PositionRole::Blank; chars.len()];
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let end = i - 1;
        for (col, role) in roles.iter_mut().enumerate().take(end + 1).skip(start) {
            *role = if col == start || col == end {
                PositionRole::Border
            } else {
                PositionRole::Body
            };
        }
    }
    roles
}

/// Column of the score map: the kind of format event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    BodyFullMatch,
    BodyGroupMatch,
    BorderFullMatch,
    BorderGroupMatch,
    BorderNoMatch,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::BodyFullMatch,
        EventKind::BodyGroupMatch,
        EventKind::BorderFullMatch,
        EventKind::BorderGroupMatch,
        EventKind::BorderNoMatch,
    ];

    pub fn column(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::BodyFullMatch => "Body Full Match",
            EventKind::BodyGroupMatch => "Body Group Match",
            EventKind::BorderFullMatch => "Border Full Match",
            EventKind::BorderGroupMatch => "Border Group Match",
            EventKind::BorderNoMatch => "Border No Match",
        }
    }
}

/// A weighted format event found at one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScoreEvent {
    pub kind: EventKind,
    /// Never [`CharClass::Space`].
    pub class: CharClass,
}

/// Decides which event (if any) a pair of aligned columns produces.
///
/// Returns `None` for "no event". Rules:
/// - both blank: no event;
/// - same class, both non-space: full match when the characters are identical,
///   group match otherwise. The column kind is `Body` only when both roles are
///   `Body`. Identical digits inside word bodies count as a group match: inside
///   a number only the position of a digit carries format, not its value;
/// - different non-space classes: border mismatch on the class of `a` when at
///   least one side is a border, otherwise no event;
/// - one side blank: no event (the column still counts as active).
pub fn classify_event(
    a: char,
    role_a: PositionRole,
    b: char,
    role_b: PositionRole,
) -> Option<ScoreEvent> {
    let class_a = classify_char(a);
    let class_b = classify_char(b);
    if class_a == CharClass::Space || class_b == CharClass::Space {
        return None;
    }
    let border = role_a == PositionRole::Border || role_b == PositionRole::Border;
    if class_a != class_b {
        return border.then_some(ScoreEvent {
            kind: EventKind::BorderNoMatch,
            class: class_a,
        });
    }
    let identical = a == b && !(class_a == CharClass::Numeric && !border);
    let kind = match (border, identical) {
        (true, true) => EventKind::BorderFullMatch,
        (true, false) => EventKind::BorderGroupMatch,
        (false, true) => EventKind::BodyFullMatch,
        (false, false) => EventKind::BodyGroupMatch,
    };
    Some(ScoreEvent {
        kind,
        class: class_a,
    })
}

/// 3x5 matrix of event weights: rows Alpha/Numeric/Symbol, columns in
/// [`EventKind`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScoreMap {
    pub weights: [[f64; 5]; 3],
}

impl Default for FeatureScoreMap {
    fn default() -> Self {
        FeatureScoreMap {
            weights: [
                [3.0, 3.0, 5.0, 5.0, 1.0],
                [3.0, 5.0, 7.0, 5.0, 1.0],
                [8.0, 6.0, 9.0, 5.0, 1.0],
            ],
        }
    }
}

impl FeatureScoreMap {
    pub const ROWS: usize = 3;
    pub const COLS: usize = 5;

    pub fn new(weights: [[f64; 5]; 3]) -> Result<Self> {
        let map = FeatureScoreMap { weights };
        map.validate()?;
        Ok(map)
    }

    /// Every element set to `value`.
    pub fn even(value: f64) -> Self {
        FeatureScoreMap {
            weights: [[value; 5]; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidScoreMap(
                "weights must be finite and non-negative".into(),
            ));
        }
        if self.sum() <= 0.0 {
            return Err(Error::DegenerateScoreMap);
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row][col]
    }

    pub fn weight(&self, event: ScoreEvent) -> f64 {
        match event.class.row() {
            Some(row) => self.weights[row][event.kind.column()],
            None => 0.0,
        }
    }

    pub fn with_element(&self, row: usize, col: usize, value: f64) -> Self {
        let mut out = *self;
        out.weights[row][col] = value;
        out
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = *self;
        out.weights.iter_mut().flatten().for_each(|w| *w *= k);
        out
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / 15.0
    }
}

impl fmt::Display for FeatureScoreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# rows: alpha numeric symbol")?;
        writeln!(
            f,
            "# cols: body-full body-group border-full border-group border-nomatch"
        )?;
        for row in &self.weights {
            let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Score-map file grammar: three non-comment lines of five numbers each,
/// separated by whitespace and/or commas. `#` starts a comment; blank lines
/// are ignored. Row order Alpha, Numeric, Symbol.
impl FromStr for FeatureScoreMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cells = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::InvalidScoreMap(format!("line {}: bad number {:?}", lineno + 1, t))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if cells.len() != 5 {
                return Err(Error::InvalidScoreMap(format!(
                    "line {}: expected 5 values, found {}",
                    lineno + 1,
                    cells.len()
                )));
            }
            rows.push([cells[0], cells[1], cells[2], cells[3], cells[4]]);
        }
        if rows.len() != 3 {
            return Err(Error::InvalidScoreMap(format!(
                "expected 3 rows, found {}",
                rows.len()
            )));
        }
        FeatureScoreMap::new([rows[0], rows[1], rows[2]])
    }
}

/// Event tally for one line pair. Independent of any score map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    pub counts: [[u32; 5]; 3],
    pub active: u32,
}

impl EventCounts {
    pub fn total_events(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }

    /// Weighted sum of events under `map`.
    pub fn weighted(&self, map: &FeatureScoreMap) -> f64 {
        let mut total = 0.0;
        for (row, counts) in self.counts.iter().enumerate() {
            for (col, &n) in counts.iter().enumerate() {
                total += f64::from(n) * map.weights[row][col];
            }
        }
        total
    }

    /// Score with events weighted by `weights` and the normalizer taken from
    /// `normalizer`'s element sum.
    fn score_with(&self, weights: &FeatureScoreMap, normalizer: &FeatureScoreMap) -> f64 {
        if self.active == 0 {
            return 0.0;
        }
        // 100 * w / (active * sum/15), arranged so that scaling the map by a
        // power of two (or any factor that keeps the sums exact) is exact.
        100.0 * 15.0 * self.weighted(weights) / (f64::from(self.active) * normalizer.sum())
    }

    pub fn score(&self, map: &FeatureScoreMap) -> f64 {
        self.score_with(map, map)
    }
}

fn trimmed_chars(line: &str) -> Vec<char> {
    line.trim_end().chars().collect()
}

/// Tallies the events of a line pair.
pub fn count_events(a: &str, b: &str) -> EventCounts {
    let a = trimmed_chars(a);
    let b = trimmed_chars(b);
    let roles_a = roles_of(&a);
    let roles_b = roles_of(&b);
    let width = a.len().max(b.len());
    let mut out = EventCounts::default();
    for col in 0..width {
        let (ca, ra) = a
            .get(col)
            .map_or((' ', PositionRole::Blank), |&c| (c, roles_a[col]));
        let (cb, rb) = b
            .get(col)
            .map_or((' ', PositionRole::Blank), |&c| (c, roles_b[col]));
        if ra == PositionRole::Blank && rb == PositionRole::Blank {
            continue;
        }
        out.active += 1;
        if let Some(event) = classify_event(ca, ra, cb, rb) {
            if let Some(row) = event.class.row() {
                out.counts[row][event.kind.column()] += 1;
            }
        }
    }
    out
}

/// Normalized formatting similarity of two lines.
pub fn compare_lines(a: &str, b: &str, map: &FeatureScoreMap) -> Result<f64> {
    if map.sum() <= 0.0 {
        return Err(Error::DegenerateScoreMap);
    }
    Ok(count_events(a, b).score(map))
}

/// Scores for one map element set to 1..=9 in turn.
///
/// The normalizer stays at the input map's mean, so the sequence reflects how
/// much the pair's events depend on that element: an element whose event kind
/// never occurs in the pair yields a constant sequence.
pub fn vary_element(
    a: &str,
    b: &str,
    map: &FeatureScoreMap,
    row: usize,
    col: usize,
) -> Result<[f64; 9]> {
    if row >= FeatureScoreMap::ROWS || col >= FeatureScoreMap::COLS {
        return Err(Error::InvalidScoreMap(format!(
            "element ({row}, {col}) out of range"
        )));
    }
    if map.sum() <= 0.0 {
        return Err(Error::DegenerateScoreMap);
    }
    let counts = count_events(a, b);
    let mut out = [0.0; 9];
    for (i, slot) in out.iter_mut().enumerate() {
        let varied = map.with_element(row, col, (i + 1) as f64);
        *slot = counts.score_with(&varied, map);
    }
    Ok(out)
}

/// Variation envelope of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementVariation {
    pub row: usize,
    pub col: usize,
    pub scores: [f64; 9],
}

impl ElementVariation {
    pub fn min(&self) -> f64 {
        self.scores.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn swing(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn influential(&self) -> bool {
        self.scores.iter().any(|s| *s != self.scores[0])
    }
}

/// Runs [`vary_element`] over all 15 elements, row-major.
pub fn variation_table(a: &str, b: &str, map: &FeatureScoreMap) -> Result<Vec<ElementVariation>> {
    let mut out = Vec::with_capacity(15);
    for row in 0..FeatureScoreMap::ROWS {
        for col in 0..FeatureScoreMap::COLS {
            out.push(ElementVariation {
                row,
                col,
                scores: vary_element(a, b, map, row, col)?,
            });
        }
    }
    Ok(out)
}

/// Zeroes every element that does not influence the pair's score, raising the
/// relative weight of the ones that do.
pub fn adapt_map(a: &str, b: &str, map: &FeatureScoreMap) -> Result<FeatureScoreMap> {
    if count_events(a, b).total_events() == 0 {
        return Err(Error::NoCommonFeatures);
    }
    let mut adapted = *map;
    for v in variation_table(a, b, map)? {
        if !v.influential() {
            adapted.weights[v.row][v.col] = 0.0;
        }
    }
    if adapted.sum() <= 0.0 {
        // Every influential element had weight zero in the input map.
        return Err(Error::NoCommonFeatures);
    }
    Ok(adapted)
}
