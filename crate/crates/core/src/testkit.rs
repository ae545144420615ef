//! Synthetic documents with known structure, and brute-force oracles.
//!
//! Two generators are provided: the built-in `figure3` financial report (an
//! invoice variance report with page headers, group headers/footers and
//! division totals) and a grammar-driven generator for random nested
//! structures described by a [`StructureSpec`]. Both return the document
//! together with its [`GroundTruth`].
//!
//! The oracles re-implement scoring and repeat finding in the most naive way
//! possible and share no code with the production modules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::FeatureScoreMap;
use crate::templates::TemplateId;

/// One generated field of a template line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldGen {
    /// 1-based start column.
    pub col: usize,
    #[serde(flatten)]
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    Literal { text: String },
    Digits { len: usize },
    Letters { len: usize },
    /// One of several options of equal length.
    Choice { options: Vec<String> },
    /// Decimal with two fraction digits, right-aligned in `width` columns.
    Amount { width: usize },
}

impl FieldKind {
    fn width(&self) -> usize {
        match self {
            FieldKind::Literal { text } => text.chars().count(),
            FieldKind::Digits { len } | FieldKind::Letters { len } => *len,
            FieldKind::Choice { options } => {
                options.iter().map(|o| o.chars().count()).max().unwrap_or(0)
            }
            FieldKind::Amount { width } => *width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateGrammar {
    pub fields: Vec<FieldGen>,
}

/// A nested pattern over grammar indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    #[serde(default)]
    pub header: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<Box<PatternSpec>>,
    #[serde(default)]
    pub footer: Vec<usize>,
    /// Inclusive range of instances per parent instance (for the top pattern:
    /// per document, unless a line target is given).
    pub repeat: (usize, usize),
}

impl PatternSpec {
    pub fn depth(&self) -> usize {
        1 + self.child.as_ref().map_or(0, |c| c.depth())
    }

    fn ids(&self, out: &mut Vec<usize>) {
        out.extend(&self.header);
        if let Some(c) = &self.child {
            c.ids(out);
        }
        out.extend(&self.footer);
    }
}

/// A block of templates injected periodically between detail instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub templates: Vec<usize>,
    /// Minimum number of lines between two blocks.
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub templates: Vec<TemplateGrammar>,
    pub hierarchy: PatternSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// One planted detail item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// 1-based line numbers of the item's lines.
    pub lines: Vec<usize>,
    /// Generated field texts of the item's lines, in order.
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// (1-based line, template id); ids are numbered by first appearance.
    pub series: Vec<(usize, TemplateId)>,
    pub dss: String,
    pub records: Vec<TruthRecord>,
}

impl GroundTruth {
    pub fn ids(&self) -> Vec<TemplateId> {
        self.series.iter().map(|&(_, t)| t).collect()
    }
}

/// Line under construction, addressed by 1-based columns.
#[derive(Default)]
struct LineBuf(Vec<char>);

impl LineBuf {
    fn put(&mut self, col: usize, text: &str) -> &mut Self {
        let start = col - 1;
        for (i, c) in text.chars().enumerate() {
            if self.0.len() <= start + i {
                self.0.resize(start + i + 1, ' ');
            }
            self.0[start + i] = c;
        }
        self
    }

    /// Places `text` so that it ends at column `end`.
    fn put_end(&mut self, end: usize, text: &str) -> &mut Self {
        let len = text.chars().count();
        if len == 0 {
            return self;
        }
        self.put(end + 1 - len, text)
    }

    fn finish(&mut self) -> String {
        let s: String = self.0.iter().collect();
        s.trim_end().to_string()
    }
}

// ---------------------------------------------------------------------------
// figure3

pub const FIGURE3_LINES: usize = 400;
pub const FIGURE3_DSS: &str = "[[5, [6, 7], 8], 9] / [0, 1, 2, 3, 4]";
const PAGE_LENGTH: usize = 54;

/// Items per group, groups per division. The first division holds the
/// verbatim sample lines; the plan fills exactly 400 lines.
const FIGURE3_PLAN: &[&[usize]] = &[
    &[3, 18, 1, 1],
    &[3, 4, 3],
    &[4, 5, 3, 6, 4, 3, 4],
    &[2, 7, 3, 5],
    &[4, 2, 6, 3, 1],
    &[5, 3, 4, 2, 3, 2],
    &[1, 7, 7, 7],
];

#[derive(Debug, Clone)]
struct Item {
    upc: String,
    qty: String,
    um: &'static str,
    pack: String,
    price: String,
    value1: String,
    value2: String,
    variance: String,
    adj: &'static str,
    code: String,
    desc: String,
}

impl Item {
    #[allow(clippy::too_many_arguments)]
    fn fixed(
        upc: &str,
        qty: &str,
        um: &'static str,
        pack: &str,
        price: &str,
        values: [&str; 3],
        adj: &'static str,
        code: &str,
        desc: &str,
    ) -> Self {
        Item {
            upc: upc.into(),
            qty: qty.into(),
            um,
            pack: pack.into(),
            price: price.into(),
            value1: values[0].into(),
            value2: values[1].into(),
            variance: values[2].into(),
            adj,
            code: code.into(),
            desc: desc.into(),
        }
    }

    fn upc_line(&self) -> String {
        LineBuf::default()
            .put(53, &self.upc)
            .put_end(71, &self.qty)
            .put(74, self.um)
            .put_end(81, &self.pack)
            .put_end(89, &self.price)
            .put_end(100, &self.value1)
            .put_end(108, &self.value2)
            .put_end(119, &self.variance)
            .put(123, self.um)
            .put(126, self.adj)
            .finish()
    }

    fn desc_line(&self) -> String {
        LineBuf::default().put(53, &self.code).put(60, &self.desc).finish()
    }

    fn values(&self) -> Vec<String> {
        [
            &self.upc,
            &self.qty,
            self.um,
            &self.pack,
            &self.price,
            &self.value1,
            &self.value2,
            &self.variance,
            self.um,
            self.adj,
            &self.code,
            &self.desc,
        ]
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.to_string())
        .collect()
    }
}

#[derive(Debug, Clone)]
struct GroupHeader {
    cust: String,
    store: String,
    inv: String,
    po: String,
}

impl GroupHeader {
    fn line(&self) -> String {
        LineBuf::default()
            .put(1, "SW")
            .put(5, &self.cust)
            .put(14, &self.store)
            .put(21, &self.inv)
            .put(42, &self.po)
            .finish()
    }
}

fn page_header(page: usize) -> [String; 5] {
    let mut dashes = LineBuf::default();
    for (col, len) in [
        (1, 3),
        (5, 8),
        (14, 6),
        (21, 11),
        (42, 6),
        (53, 11),
        (68, 4),
        (74, 2),
        (77, 4),
        (83, 6),
        (91, 7),
        (101, 7),
        (112, 8),
        (123, 2),
        (126, 7),
    ] {
        dashes.put(col, &"-".repeat(len));
    }
    [
        LineBuf::default()
            .put(2, "REPORT:")
            .put(10, "MCDRA03")
            .put(44, "INVOICE")
            .put(52, "VARIANCE")
            .put(61, "REPORT")
            .put(120, "PAGE:")
            .put(128, &page.to_string())
            .finish(),
        LineBuf::default()
            .put(1, "PROGRAM:")
            .put(10, "ED89510")
            .put(45, "WALGREENVA")
            .put(57, "INV")
            .put(61, "SW")
            .put(96, "DATE:")
            .put(102, "09-20-17")
            .put(115, "TIME:")
            .put(121, "11:46:33")
            .finish(),
        LineBuf::default()
            .put(53, "UPC/")
            .put(68, "INV")
            .put(91, "CUSTOMER")
            .put(101, "MCLANE")
            .finish(),
        LineBuf::default()
            .put(1, "DIV")
            .put(5, "CUST-NUM")
            .put(14, "STORE")
            .put(21, "INV-VAR-ID")
            .put(42, "PO-NUM")
            .put(53, "DESC")
            .put(68, "QTY")
            .put(74, "UM")
            .put(77, "PACK")
            .put(83, "PRICE")
            .put(92, "VALUE")
            .put(101, "VALUE")
            .put(112, "VARIANCE")
            .put(123, "UM")
            .put(126, "ADJ")
            .put(130, "TYP")
            .finish(),
        dashes.finish(),
    ]
}

fn group_footer(amount: &str) -> String {
    LineBuf::default()
        .put(24, "TOTAL")
        .put(30, "INVOICE")
        .put(38, "ADJUSTMENT")
        .put_end(61, amount)
        .finish()
}

fn division_total(amount: &str) -> String {
    LineBuf::default()
        .put(22, "DIVISION")
        .put(31, "TOTAL")
        .put(37, "ADJUSTMENTS")
        .put_end(64, amount)
        .finish()
}

const DESC_WORDS: &[&str] = &[
    "NICE", "WLGRNS", "MARLBORO", "CAMEL", "NEWPORT", "PALL", "MALL", "VIRG", "SL", "SS",
    "GOLD", "MTL", "MTHL", "BX", "FSC", "FS", "LRG", "GRADE", "EGGS", "RST", "SLT", "MX", "NUTS",
    "GRAPE", "PCH", "CHOC", "BAR", "MINT", "GUM", "COLA", "DIET", "LT", "KING", "RED", "BLUE",
    "CHIPS", "SALSA", "TEA", "WATER", "SPRNG", "CANDY", "PEANUT", "BTR", "CUP", "ORIG",
];

fn digits(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
}

fn letters(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| char::from(b'A' + rng.gen_range(0..26u8))).collect()
}

fn random_item(rng: &mut ChaCha8Rng) -> Item {
    let short = rng.gen_bool(0.7);
    let (um, pack) = if rng.gen_bool(0.5) {
        ("CT", "10".to_string())
    } else {
        ("EA", rng.gen_range(1..=15).to_string())
    };
    let qty: u32 = rng.gen_range(1..=30);
    let price = format!("{}.{:02}", rng.gen_range(1..=70), rng.gen_range(0..100));
    let (value1, value2, variance) = if short {
        let ordered: u32 = rng.gen_range(1..=20);
        let received = rng.gen_range(0..ordered);
        let v2 = if received == 0 {
            String::new()
        } else {
            format!("{received}.0000")
        };
        (
            format!("{ordered}.0000"),
            v2,
            format!("-{}.0000", ordered - received),
        )
    } else {
        (
            format!("{}.{:04}", rng.gen_range(0..5), rng.gen_range(0..10000)),
            format!("0.{:04}", rng.gen_range(0..10000)),
            String::new(),
        )
    };
    let mut desc: Vec<&str> = Vec::new();
    let mut len = 0;
    let target = rng.gen_range(2..=6);
    while desc.len() < target {
        let w = DESC_WORDS[rng.gen_range(0..DESC_WORDS.len())];
        if len + w.len() + 1 > 26 {
            break;
        }
        len += w.len() + 1;
        desc.push(w);
    }
    Item {
        upc: format!("0{}", digits(rng, 10)),
        qty: qty.to_string(),
        um,
        pack,
        price,
        value1,
        value2,
        variance,
        adj: if short { "SHORT" } else { "PRICE" },
        code: digits(rng, 6),
        desc: desc.join(" "),
    }
}

fn random_group_header(rng: &mut ChaCha8Rng) -> GroupHeader {
    GroupHeader {
        cust: format!("0{}", digits(rng, 7)),
        store: format!("00{}", digits(rng, 4)),
        inv: format!("01307{}I", digits(rng, 5)),
        po: digits(rng, 6),
    }
}

fn random_amount(rng: &mut ChaCha8Rng, min: u32, max: u32) -> String {
    format!("(-{}.{:02})", rng.gen_range(min..max), rng.gen_range(1..100))
}

fn verbatim_first_division() -> (Vec<GroupHeader>, Vec<Vec<Item>>, Vec<String>, String) {
    let headers = vec![
        GroupHeader {
            cust: "01667949".into(),
            store: "004513".into(),
            inv: "0130687732I".into(),
            po: "337261".into(),
        },
        GroupHeader {
            cust: "01667949".into(),
            store: "004513".into(),
            inv: "0130687734I".into(),
            po: "337259".into(),
        },
        GroupHeader {
            cust: "01670224".into(),
            store: "007671".into(),
            inv: "0130712795I".into(),
            po: "219546".into(),
        },
        GroupHeader {
            cust: "01670943".into(),
            store: "009697".into(),
            inv: "0130715273I".into(),
            po: "215694".into(),
        },
    ];
    let grape = Item::fixed(
        "02590020748",
        "30",
        "EA",
        "15",
        "10.96",
        ["0.7306", "0.0004", ""],
        "PRICE",
        "542100",
        "WLGRNS SS GRAPE CGRLO PCH",
    );
    let items = vec![
        vec![
            Item::fixed(
                "02610080575",
                "8",
                "CT",
                "10",
                "63.04",
                ["2.0000", "8.0000", "-6.0000"],
                "SHORT",
                "292235",
                "NEWPORT MTL BX FSC",
            ),
            Item::fixed(
                "02720001865",
                "4",
                "CT",
                "10",
                "54.74",
                ["2.0000", "4.0000", "-2.0000"],
                "SHORT",
                "358416",
                "PALL MALL MTHL 100 BX FSC",
            ),
            Item::fixed(
                "02820019830",
                "1",
                "CT",
                "10",
                "62.44",
                ["1.0000", "", "-1.0000"],
                "SHORT",
                "738708",
                "VIRG SL SS GOLD MTL BX FS",
            ),
        ],
        // First and last items of the second group are verbatim; the middle
        // is filled in by the generator.
        vec![
            Item::fixed(
                "04902264490",
                "15",
                "EA",
                "15",
                "17.68",
                ["15.0000", "", "-15.0000"],
                "SHORT",
                "065136",
                "NICE LRG GRADE A EGGS",
            ),
            Item::fixed(
                "04902295576",
                "2",
                "EA",
                "1",
                "1.13",
                ["1.1300", "0.1200", ""],
                "PRICE",
                "936484",
                "NICE RST N SLT MX NUTS SS",
            ),
        ],
        vec![grape.clone()],
        vec![grape],
    ];
    let footers = vec![
        "(-550.16)".to_string(),
        "(-16.76)".to_string(),
        "(-0.01)".to_string(),
        "(-0.01)".to_string(),
    ];
    (headers, items, footers, "(-891.68)".to_string())
}

/// Emits lines with page headers every [`PAGE_LENGTH`] lines.
struct Paginator {
    lines: Vec<String>,
    ids: Vec<TemplateId>,
    page: usize,
    used: usize,
}

impl Paginator {
    fn new_page(&mut self) {
        self.page += 1;
        for (i, l) in page_header(self.page).into_iter().enumerate() {
            self.lines.push(l);
            self.ids.push(i);
        }
        self.used = 5;
    }

    /// Keeps `unit` on one page.
    fn unit(&mut self, unit: &[(String, TemplateId)]) -> usize {
        if self.used + unit.len() > PAGE_LENGTH {
            self.new_page();
        }
        let first = self.lines.len() + 1;
        for (l, id) in unit {
            self.lines.push(l.clone());
            self.ids.push(*id);
        }
        self.used += unit.len();
        first
    }
}

/// The built-in financial report: 400 lines whose first division reproduces
/// a fixed sample invoice section word for word (modulo column positions).
///
/// Only `lines` ≤ 400 is supported; shorter documents are prefixes.
pub fn figure3(lines: usize, seed: u64) -> Result<(Vec<String>, GroundTruth)> {
    if lines == 0 || lines > FIGURE3_LINES {
        return Err(Error::InvalidSpec(format!(
            "figure3 supports 1..={FIGURE3_LINES} lines, got {lines}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Paginator {
        lines: Vec::new(),
        ids: Vec::new(),
        page: 0,
        used: 0,
    };
    let mut records = Vec::new();
    let (v_headers, v_items, v_footers, v_total) = verbatim_first_division();
    p.new_page();
    for (d, groups) in FIGURE3_PLAN.iter().enumerate() {
        if d > 0 {
            p.new_page();
        }
        for (g, &count) in groups.iter().enumerate() {
            let header = if d == 0 {
                v_headers[g].clone()
            } else {
                random_group_header(&mut rng)
            };
            p.unit(&[(header.line(), 5)]);
            for k in 0..count {
                let item = if d == 0 {
                    let fixed = &v_items[g];
                    if fixed.len() == count {
                        fixed[k].clone()
                    } else if k == 0 {
                        fixed[0].clone()
                    } else if k == count - 1 {
                        fixed[fixed.len() - 1].clone()
                    } else {
                        random_item(&mut rng)
                    }
                } else {
                    random_item(&mut rng)
                };
                let first = p.unit(&[(item.upc_line(), 6), (item.desc_line(), 7)]);
                records.push(TruthRecord {
                    lines: vec![first, first + 1],
                    values: item.values(),
                });
            }
            let amount = if d == 0 {
                v_footers[g].clone()
            } else {
                random_amount(&mut rng, 0, 900)
            };
            p.unit(&[(group_footer(&amount), 8)]);
        }
        let total = if d == 0 {
            v_total.clone()
        } else {
            random_amount(&mut rng, 100, 1000)
        };
        p.unit(&[(division_total(&total), 9)]);
    }
    debug_assert_eq!(p.lines.len(), FIGURE3_LINES);
    p.lines.truncate(lines);
    records.retain(|r| r.lines.iter().all(|&l| l <= lines));
    let series = p
        .ids
        .iter()
        .take(lines)
        .enumerate()
        .map(|(i, &t)| (i + 1, t))
        .collect();
    Ok((
        p.lines,
        GroundTruth {
            series,
            dss: FIGURE3_DSS.to_string(),
            records,
        },
    ))
}

// ---------------------------------------------------------------------------
// grammar-driven generation

fn render_field(kind: &FieldKind, rng: &mut ChaCha8Rng) -> String {
    match kind {
        FieldKind::Literal { text } => text.clone(),
        FieldKind::Digits { len } => digits(rng, *len),
        FieldKind::Letters { len } => letters(rng, *len),
        FieldKind::Choice { options } => options
            .choose(rng)
            .cloned()
            .unwrap_or_default(),
        FieldKind::Amount { width } => {
            let int_digits = width.saturating_sub(3).max(1);
            let max = 10u64.pow(int_digits.min(9) as u32);
            let int = rng.gen_range(0..max);
            let text = format!("{int}.{:02}", rng.gen_range(0..100));
            format!("{text:>width$}")
        }
    }
}

/// Renders one line of `grammar`, returning the line and its field texts.
pub fn render_line(grammar: &TemplateGrammar, rng: &mut ChaCha8Rng) -> (String, Vec<String>) {
    let mut buf = LineBuf::default();
    let mut values = Vec::new();
    for f in &grammar.fields {
        let text = render_field(&f.kind, rng);
        buf.put(f.col, &text);
        values.push(text.trim().to_string());
    }
    (buf.finish(), values)
}

impl StructureSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.templates.len();
        let mut ids = Vec::new();
        self.hierarchy.ids(&mut ids);
        if let Some(noise) = &self.noise {
            if noise.templates.is_empty() || noise.period == 0 {
                return Err(Error::InvalidSpec("noise block needs templates and a period".into()));
            }
            ids.extend(&noise.templates);
        }
        let distinct: BTreeSet<usize> = ids.iter().copied().collect();
        if distinct.len() != ids.len() {
            return Err(Error::InvalidSpec("a template is used more than once".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= n) {
            return Err(Error::InvalidSpec(format!("unknown template {bad}")));
        }
        fn check(p: &PatternSpec) -> Result<()> {
            if p.repeat.0 == 0 || p.repeat.0 > p.repeat.1 {
                return Err(Error::InvalidSpec(format!("bad repeat range {:?}", p.repeat)));
            }
            match &p.child {
                None if p.header.is_empty() => {
                    Err(Error::InvalidSpec("detail pattern has no templates".into()))
                }
                Some(_) if p.header.is_empty() && p.footer.is_empty() => Err(
                    Error::InvalidSpec("every level needs a header or a footer".into()),
                ),
                Some(c) => check(c),
                None => Ok(()),
            }
        }
        check(&self.hierarchy)?;
        for (i, g) in self.templates.iter().enumerate() {
            if g.fields.is_empty() {
                return Err(Error::InvalidSpec(format!("template {i} has no fields")));
            }
            let mut end = 0;
            for f in &g.fields {
                if f.col == 0 || f.col <= end {
                    return Err(Error::InvalidSpec(format!(
                        "template {i}: fields must be ordered and separated"
                    )));
                }
                end = f.col + f.kind.width();
            }
        }
        Ok(())
    }
}

struct Emitter<'a> {
    spec: &'a StructureSpec,
    rng: ChaCha8Rng,
    lines: Vec<String>,
    spec_ids: Vec<usize>,
    records: Vec<TruthRecord>,
    since_noise: usize,
    noise_blocks: usize,
}

impl Emitter<'_> {
    fn emit(&mut self, t: usize) -> Vec<String> {
        let (line, values) = render_line(&self.spec.templates[t], &mut self.rng);
        self.lines.push(line);
        self.spec_ids.push(t);
        self.since_noise += 1;
        values
    }

    fn noise(&mut self) {
        if let Some(noise) = &self.spec.noise {
            for &t in &noise.templates.clone() {
                self.emit(t);
            }
            self.since_noise = 0;
            self.noise_blocks += 1;
        }
    }

    /// Noise breaks in before a unit, like a page break.
    fn maybe_noise(&mut self) {
        if let Some(noise) = &self.spec.noise {
            if self.since_noise >= noise.period {
                self.noise();
            }
        }
    }

    fn instance(&mut self, p: &PatternSpec, first: bool) {
        match &p.child {
            None => {
                self.maybe_noise();
                let mut lines = Vec::new();
                let mut values = Vec::new();
                for &t in &p.header {
                    values.extend(self.emit(t));
                    lines.push(self.lines.len());
                }
                self.records.push(TruthRecord { lines, values });
            }
            Some(c) => {
                if !p.header.is_empty() {
                    self.maybe_noise();
                }
                for &t in &p.header {
                    self.emit(t);
                }
                let (lo, hi) = c.repeat;
                // The first instance of every level repeats its child, so the
                // detail templates are the most frequent ones.
                let count = if first { hi.max(2) } else { self.rng.gen_range(lo..=hi) };
                for k in 0..count {
                    self.instance(c, first && k == 0);
                }
                if !p.footer.is_empty() {
                    self.maybe_noise();
                }
                for &t in &p.footer {
                    self.emit(t);
                }
            }
        }
    }
}

fn relabel(spec_ids: &[usize]) -> BTreeMap<usize, TemplateId> {
    let mut map = BTreeMap::new();
    for &t in spec_ids {
        let next = map.len();
        map.entry(t).or_insert(next);
    }
    map
}

fn render_spec_pattern(p: &PatternSpec, ids: &BTreeMap<usize, TemplateId>) -> String {
    let mut items: Vec<String> = p.header.iter().map(|t| ids[t].to_string()).collect();
    if let Some(c) = &p.child {
        items.push(render_spec_pattern(c, ids));
        items.extend(p.footer.iter().map(|t| ids[t].to_string()));
    }
    format!("[{}]", items.join(", "))
}

/// Generates a document from `spec`. The top pattern repeats until at least
/// `lines` lines exist (or per its repeat range when `lines` is 0); the
/// document always ends on a complete top-level instance.
pub fn gen_document(spec: &StructureSpec, lines: usize) -> Result<(Vec<String>, GroundTruth)> {
    spec.validate()?;
    let mut e = Emitter {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        lines: Vec::new(),
        spec_ids: Vec::new(),
        records: Vec::new(),
        since_noise: 0,
        noise_blocks: 0,
    };
    e.noise();
    let (lo, hi) = spec.hierarchy.repeat;
    let top = if lines == 0 {
        e.rng.gen_range(lo..=hi)
    } else {
        usize::MAX
    };
    let mut k = 0;
    while k < top && (lines == 0 || e.lines.len() < lines) {
        e.instance(&spec.hierarchy, k == 0);
        k += 1;
    }
    let ids = relabel(&e.spec_ids);
    let mut dss = render_spec_pattern(&spec.hierarchy, &ids);
    if let Some(noise) = &spec.noise {
        if e.noise_blocks >= 2 {
            let block: Vec<String> = noise.templates.iter().map(|t| ids[t].to_string()).collect();
            let _ = write!(dss, " / [{}]", block.join(", "));
        }
    }
    let series = e
        .spec_ids
        .iter()
        .enumerate()
        .map(|(i, t)| (i + 1, ids[t]))
        .collect();
    Ok((
        e.lines,
        GroundTruth {
            series,
            dss,
            records: e.records,
        },
    ))
}

/// A random nested structure of the given depth, with pairwise dissimilar
/// templates (oracle score below 40 between sample lines of any two).
/// Noisy specs get at least two levels: in a flat document a recurring
/// block is indistinguishable from a group header.
pub fn random_spec(seed: u64, depth: usize, with_noise: bool) -> StructureSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = depth.max(if with_noise { 2 } else { 1 });
    let detail_count = rng.gen_range(1..=2);
    let mut level_sizes = vec![(detail_count, 0)];
    for _ in 1..depth {
        let h = rng.gen_range(0..=2);
        let f = if h == 0 { rng.gen_range(1..=2) } else { rng.gen_range(0..=1) };
        level_sizes.push((h, f));
    }
    let structural: usize = level_sizes.iter().map(|(h, f)| h + f).sum();
    let noise_count = if with_noise {
        rng.gen_range(1..=3).min(MAX_RANDOM_TEMPLATES - structural)
    } else {
        0
    };
    let total = structural + noise_count;
    let templates = dissimilar_templates(&mut rng, total);

    let mut next = 0;
    let mut take = |n: usize| {
        let ids: Vec<usize> = (next..next + n).collect();
        next += n;
        ids
    };
    let mut pattern = PatternSpec {
        header: take(detail_count),
        child: None,
        footer: Vec::new(),
        repeat: (1, rng.gen_range(2..=4)),
    };
    for &(h, f) in &level_sizes[1..] {
        pattern = PatternSpec {
            header: take(h),
            child: Some(Box::new(pattern)),
            footer: take(f),
            repeat: (1, rng.gen_range(2..=3)),
        };
    }
    let noise = with_noise.then(|| NoiseSpec {
        templates: take(noise_count),
        period: rng.gen_range(12..=24),
    });
    StructureSpec {
        templates,
        hierarchy: pattern,
        noise,
        seed,
    }
}

fn random_grammar(rng: &mut ChaCha8Rng) -> TemplateGrammar {
    let mut fields = Vec::new();
    let mut col = rng.gen_range(1..=40);
    let n = rng.gen_range(2..=4);
    for _ in 0..n {
        let kind = match rng.gen_range(0..5) {
            0 => {
                let len = rng.gen_range(3..=8);
                FieldKind::Literal {
                    text: letters(rng, len),
                }
            }
            1 => FieldKind::Digits {
                len: rng.gen_range(3..=10),
            },
            2 => FieldKind::Letters {
                len: rng.gen_range(3..=8),
            },
            3 => {
                let len = rng.gen_range(2..=5);
                FieldKind::Choice {
                    options: (0..3).map(|_| letters(rng, len)).collect(),
                }
            }
            _ => FieldKind::Amount {
                width: rng.gen_range(6..=10),
            },
        };
        // Every line carries some data.
        let kind = match kind {
            FieldKind::Literal { text }
                if fields.len() + 1 == n
                    && fields.iter().all(|f: &FieldGen| matches!(f.kind, FieldKind::Literal { .. })) =>
            {
                FieldKind::Digits { len: text.len() }
            }
            k => k,
        };
        let width = kind.width();
        fields.push(FieldGen { col, kind });
        col += width + rng.gen_range(2..=12);
    }
    TemplateGrammar { fields }
}

const SAMPLES_PER_TEMPLATE: usize = 6;
const MAX_RANDOM_TEMPLATES: usize = 12;

fn dissimilar_templates(rng: &mut ChaCha8Rng, n: usize) -> Vec<TemplateGrammar> {
    let base = FeatureScoreMap::default();
    let mut out: Vec<(TemplateGrammar, Vec<String>, Vec<FeatureScoreMap>)> = Vec::new();
    while out.len() < n {
        let g = random_grammar(rng);
        let lines: Vec<String> = (0..SAMPLES_PER_TEMPLATE)
            .map(|_| render_line(&g, rng).0)
            .collect();
        // Instances must clear the similarity floor among themselves.
        let cohesive = lines.iter().all(|a| {
            lines
                .iter()
                .all(|b| oracle_score(a, b, &base).is_ok_and(|s| s >= 60.0))
        });
        if !cohesive {
            continue;
        }
        let maps = instance_maps(&lines, &base);
        let apart = |a: &[String], maps: &[FeatureScoreMap], b: &[String]| {
            maps.iter().all(|m| {
                a.iter().all(|x| {
                    b.iter()
                        .all(|y| oracle_score(x, y, m).map_or(true, |s| s < 40.0))
                })
            })
        };
        let ok = out
            .iter()
            .all(|(_, other, other_maps)| apart(&lines, &maps, other) && apart(other, other_maps, &lines));
        if ok {
            out.push((g, lines, maps));
        }
    }
    out.into_iter().map(|(g, _, _)| g).collect()
}

/// The base map plus the maps adapted to each pair of instances.
fn instance_maps(lines: &[String], base: &FeatureScoreMap) -> Vec<FeatureScoreMap> {
    let mut maps = vec![*base];
    for (i, a) in lines.iter().enumerate() {
        for b in &lines[i + 1..] {
            if let Ok(m) = crate::scoring::adapt_map(a, b, base) {
                if !maps.contains(&m) {
                    maps.push(m);
                }
            }
        }
    }
    maps
}

/// Expands a nested pattern over template ids into a series, repeating each
/// child between 1 and `max_repeat` times (the first instance of each level
/// repeats its child at least twice). The top pattern repeats `top` times.
pub fn expand_series(
    pattern: &crate::hierarchy::Pattern,
    top: usize,
    max_repeat: usize,
    seed: u64,
) -> Vec<TemplateId> {
    fn go(
        p: &crate::hierarchy::Pattern,
        first: bool,
        max_repeat: usize,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<TemplateId>,
    ) {
        out.extend(&p.header);
        if let Some(c) = &p.child {
            let n = if first { max_repeat.max(2) } else { rng.gen_range(1..=max_repeat.max(1)) };
            for k in 0..n {
                go(c, first && k == 0, max_repeat, rng, out);
            }
            out.extend(&p.footer);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..top.max(1) {
        go(pattern, k == 0, max_repeat, &mut rng, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// oracles

/// Naive re-implementation of line scoring: per column, look at the two
/// characters and their neighbours and decide the event from scratch.
pub fn oracle_score(a: &str, b: &str, m: &FeatureScoreMap) -> Result<f64> {
    let mut total_weight = 0.0;
    for row in &m.weights {
        for w in row {
            total_weight += *w;
        }
    }
    if total_weight <= 0.0 {
        return Err(Error::DegenerateScoreMap);
    }
    let a: Vec<char> = a.trim_end().chars().collect();
    let b: Vec<char> = b.trim_end().chars().collect();
    let at = |s: &Vec<char>, i: isize| -> char {
        if i < 0 {
            ' '
        } else {
            s.get(i as usize).copied().unwrap_or(' ')
        }
    };
    let blank = |c: char| c.is_whitespace();
    // 0 = alpha, 1 = digit, 2 = other, None = space
    let class = |c: char| -> Option<usize> {
        if blank(c) {
            None
        } else if c.is_ascii_digit() {
            Some(1)
        } else if c.is_alphabetic() {
            Some(0)
        } else {
            Some(2)
        }
    };
    let width = a.len().max(b.len());
    let mut active = 0u32;
    let mut counts = [[0u32; 5]; 3];
    for col in 0..width as isize {
        let ca = at(&a, col);
        let cb = at(&b, col);
        if blank(ca) && blank(cb) {
            continue;
        }
        active += 1;
        let (Some(ka), Some(kb)) = (class(ca), class(cb)) else {
            continue;
        };
        let edge_a = blank(at(&a, col - 1)) || blank(at(&a, col + 1));
        let edge_b = blank(at(&b, col - 1)) || blank(at(&b, col + 1));
        let edge = edge_a || edge_b;
        let kind = if ka != kb {
            if !edge {
                continue;
            }
            4
        } else if edge {
            if ca == cb {
                2
            } else {
                3
            }
        } else if ca == cb && ka != 1 {
            0
        } else {
            1
        };
        counts[ka][kind] += 1;
    }
    if active == 0 {
        return Ok(0.0);
    }
    let mut weighted = 0.0;
    for (row, c) in counts.iter().enumerate() {
        for (col, &n) in c.iter().enumerate() {
            weighted += f64::from(n) * m.weights[row][col];
        }
    }
    Ok(100.0 * 15.0 * weighted / (f64::from(active) * total_weight))
}

/// A run of at least two adjacent copies of a primitive motif that cannot be
/// extended on either side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RepeatRun {
    pub motif: Vec<TemplateId>,
    pub start: usize,
    pub count: usize,
}

/// Every maximal adjacent repeat, by exhaustive search.
pub fn oracle_repeats(series: &[TemplateId]) -> Vec<RepeatRun> {
    let n = series.len();
    let mut out = Vec::new();
    for len in 1..=n / 2 {
        for start in 0..n {
            if start + 2 * len > n {
                break;
            }
            let motif = &series[start..start + len];
            let primitive = (1..len).all(|d| {
                len % d != 0 || (0..len).any(|i| motif[i] != motif[i % d])
            });
            if !primitive {
                continue;
            }
            if start >= len && &series[start - len..start] == motif {
                continue;
            }
            let mut count = 1;
            while start + (count + 1) * len <= n
                && &series[start + count * len..start + (count + 1) * len] == motif
            {
                count += 1;
            }
            if count >= 2 {
                out.push(RepeatRun {
                    motif: motif.to_vec(),
                    start,
                    count,
                });
            }
        }
    }
    out.sort();
    out
}
