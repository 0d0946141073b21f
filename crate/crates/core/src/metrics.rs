//! RMSE, pairwise ranking compatibility (COMP), Precision and the Average
//! Measure of Impact (AMI), with per-segment aggregation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{ItemIdx, Segment, UserClass, UserIdx};

/// A test log with the model's estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredLog {
    pub user: UserIdx,
    pub item: ItemIdx,
    pub true_rating: f64,
    pub predicted_rating: f64,
    pub segment: Segment,
}

/// One top-N recommendation and how it is judged against the test set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecommendationOutcome {
    pub user: UserIdx,
    pub item: ItemIdx,
    /// 1-based position in the top-N list.
    pub rank: usize,
    /// The user's test rating of the item, if any (evaluable iff present).
    pub true_rating: Option<f64>,
    /// `r̄_u`, the user's train mean.
    pub user_mean: f64,
    /// `count(i)`, train logs of the item.
    pub item_count: usize,
    /// `|I|`.
    pub catalog_size: usize,
    pub segment: Segment,
}

impl RecommendationOutcome {
    pub fn evaluable(&self) -> bool {
        self.true_rating.is_some()
    }

    /// Relevant iff the test rating is at least the user's mean.
    pub fn relevant(&self) -> Option<bool> {
        self.true_rating.map(|r| r >= self.user_mean)
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for v in values {
        sum.add(v);
        n += 1;
    }
    (n > 0).then(|| sum.value() / n as f64)
}

/// Root mean squared error; `None` for an empty collection.
pub fn rmse(scored: &[ScoredLog]) -> Option<f64> {
    mean(scored.iter().map(|s| {
        let e = s.predicted_rating - s.true_rating;
        e * e
    }))
    .map(f64::sqrt)
}

/// Compatible pairs out of the pairs with distinct true ratings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub compatible: u64,
    pub counted: u64,
}

impl PairCounts {
    pub fn ratio(&self) -> Option<f64> {
        (self.counted > 0).then(|| self.compatible as f64 / self.counted as f64)
    }
}

impl std::ops::AddAssign for PairCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.compatible += rhs.compatible;
        self.counted += rhs.counted;
    }
}

/// COMP counts for one user's test logs given as `(true, predicted)` pairs.
///
/// A pair with different true ratings is compatible when the predictions are
/// ordered the same way; equal predictions are never compatible. Counted in
/// O(n log n) with a Fenwick tree over prediction ranks.
pub fn comp_user(logs: &[(f64, f64)]) -> PairCounts {
    let n = logs.len();
    if n < 2 {
        return PairCounts::default();
    }
    // Dense ranks of the predictions (equal predictions share a rank).
    let mut preds: Vec<f64> = logs.iter().map(|&(_, p)| p).collect();
    preds.sort_by(f64::total_cmp);
    preds.dedup_by(|a, b| a.total_cmp(b).is_eq());
    let rank_of = |p: f64| preds.binary_search_by(|x| x.total_cmp(&p)).unwrap();

    let mut order: Vec<(f64, usize)> = logs.iter().map(|&(t, p)| (t, rank_of(p))).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut tree = Fenwick::new(preds.len());
    let mut compatible = 0u64;
    let mut tied_true_pairs = 0u64;
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && order[end].0.total_cmp(&order[start].0).is_eq() {
            end += 1;
        }
        let group = (end - start) as u64;
        tied_true_pairs += group * (group - 1) / 2;
        // Earlier groups have strictly smaller true ratings; a compatible
        // pair needs a strictly smaller prediction too.
        for &(_, rank) in &order[start..end] {
            compatible += tree.prefix(rank);
        }
        for &(_, rank) in &order[start..end] {
            tree.add(rank);
        }
        start = end;
    }
    let total = (n as u64) * (n as u64 - 1) / 2;
    PairCounts {
        compatible,
        counted: total - tied_true_pairs,
    }
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1] }
    }

    fn add(&mut self, index: usize) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `index`.
    fn prefix(&self, index: usize) -> u64 {
        let mut i = index;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }
}

/// Share of relevant items among the evaluable recommendations; `None` when
/// nothing is evaluable.
pub fn precision_user(outcomes: &[RecommendationOutcome]) -> Option<f64> {
    let (relevant, evaluable) = outcomes
        .iter()
        .filter_map(RecommendationOutcome::relevant)
        .fold((0usize, 0usize), |(r, e), rel| (r + rel as usize, e + 1));
    (evaluable > 0).then(|| relevant as f64 / evaluable as f64)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Outcomes that enter AMI: evaluable and with a nonzero train count.
fn ami_terms(outcomes: &[RecommendationOutcome]) -> impl Iterator<Item = f64> + '_ {
    outcomes.iter().filter_map(|o| {
        let r = o.true_rating?;
        (o.item_count > 0)
            .then(|| sign(r - o.user_mean) * o.catalog_size as f64 / o.item_count as f64)
    })
}

/// Average Measure of Impact of one user's recommendations:
/// the mean over evaluable outcomes of `sign(r - r̄_u) · |I| / count(i)`.
/// Outcomes whose item has no train logs are left out.
pub fn ami_user(outcomes: &[RecommendationOutcome]) -> Option<f64> {
    mean(ami_terms(outcomes))
}

/// Outcomes left out of AMI because their item has no train logs.
pub fn ami_excluded(outcomes: &[RecommendationOutcome]) -> usize {
    outcomes
        .iter()
        .filter(|o| o.evaluable() && o.item_count == 0)
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Function {
    Decide,
    Compare,
    Discover,
    Explore,
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Function::Decide => "Decide",
            Function::Compare => "Compare",
            Function::Discover => "Discover",
            Function::Explore => "Explore",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "RMSE")]
    Rmse,
    /// Mean of per-user COMP ratios.
    #[serde(rename = "COMP")]
    Comp,
    /// COMP over pooled pairs.
    #[serde(rename = "COMP_micro")]
    CompMicro,
    Precision,
    #[serde(rename = "AMI")]
    Ami,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::Comp => "COMP",
            Metric::CompMicro => "COMP_micro",
            Metric::Precision => "Precision",
            Metric::Ami => "AMI",
        }
    }

    /// RMSE is better when lower, everything else when higher.
    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Rmse)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Population a metric cell is computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SegmentLabel {
    Cell(Segment),
    Users(UserClass),
    Global,
}

impl SegmentLabel {
    pub fn name(self) -> &'static str {
        match self {
            SegmentLabel::Cell(s) => s.name(),
            SegmentLabel::Users(c) => c.name(),
            SegmentLabel::Global => "Global",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Global" => SegmentLabel::Global,
            "Huser" => SegmentLabel::Users(UserClass::Heavy),
            "Luser" => SegmentLabel::Users(UserClass::Light),
            _ => SegmentLabel::Cell(*Segment::ALL.iter().find(|c| c.name() == s)?),
        })
    }
}

impl From<SegmentLabel> for String {
    fn from(s: SegmentLabel) -> String {
        s.name().to_owned()
    }
}

impl TryFrom<String> for SegmentLabel {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        SegmentLabel::parse(&s).ok_or_else(|| format!("unknown segment `{s}`"))
    }
}

impl fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One table cell. `support` counts test logs for RMSE, users with at least
/// one counted pair for COMP, pairs for COMP_micro, and evaluable outcomes
/// for Precision and AMI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub function: Function,
    pub metric: Metric,
    pub segment: SegmentLabel,
    pub value: Option<f64>,
    pub support: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn get(&self, metric: Metric, segment: SegmentLabel) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.segment == segment)
    }

    pub fn value(&self, metric: Metric, segment: SegmentLabel) -> Option<f64> {
        self.get(metric, segment).and_then(|r| r.value)
    }

    pub fn global(&self, metric: Metric) -> Option<f64> {
        self.value(metric, SegmentLabel::Global)
    }

    /// Same rows relabeled with another function.
    pub fn relabeled(&self, function: Function) -> MetricTable {
        MetricTable {
            rows: self
                .rows
                .iter()
                .map(|r| MetricRow { function, ..r.clone() })
                .collect(),
        }
    }

    /// CSV with columns `function,metric,segment,value,support`; absent
    /// values are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,metric,segment,value,support\n");
        for r in &self.rows {
            let value = r.value.map_or(String::new(), |v| format!("{v:?}"));
            out.push_str(&format!("{},{},{},{},{}\n", r.function, r.metric, r.segment, value, r.support));
        }
        out
    }

    pub fn extend(&mut self, other: MetricTable) {
        self.rows.extend(other.rows);
    }
}

/// RMSE per segment cell and globally.
pub fn aggregate_rmse(function: Function, scored: &[ScoredLog]) -> MetricTable {
    let mut rows = Vec::with_capacity(5);
    for seg in Segment::ALL {
        let cell: Vec<ScoredLog> = scored.iter().filter(|s| s.segment == seg).copied().collect();
        rows.push(MetricRow {
            function,
            metric: Metric::Rmse,
            segment: SegmentLabel::Cell(seg),
            value: rmse(&cell),
            support: cell.len() as u64,
        });
    }
    rows.push(MetricRow {
        function,
        metric: Metric::Rmse,
        segment: SegmentLabel::Global,
        value: rmse(scored),
        support: scored.len() as u64,
    });
    MetricTable { rows }
}

/// Macro (mean of per-user ratios) and micro (pooled pairs) COMP, per user
/// class and globally. Users without a counted pair are left out.
pub fn aggregate_comp(function: Function, per_user: &[(UserClass, PairCounts)]) -> MetricTable {
    let mut rows = Vec::with_capacity(6);
    let groups = [
        SegmentLabel::Users(UserClass::Heavy),
        SegmentLabel::Users(UserClass::Light),
        SegmentLabel::Global,
    ];
    for label in groups {
        let members = per_user.iter().filter(|(class, counts)| {
            counts.counted > 0
                && match label {
                    SegmentLabel::Users(c) => *class == c,
                    _ => true,
                }
        });
        let ratios: Vec<f64> = members.clone().filter_map(|(_, c)| c.ratio()).collect();
        let mut pooled = PairCounts::default();
        for (_, c) in members {
            pooled += *c;
        }
        rows.push(MetricRow {
            function,
            metric: Metric::Comp,
            segment: label,
            support: ratios.len() as u64,
            value: mean(ratios),
        });
        rows.push(MetricRow {
            function,
            metric: Metric::CompMicro,
            segment: label,
            value: pooled.ratio(),
            support: pooled.counted,
        });
    }
    MetricTable { rows }
}

/// Precision and AMI macro-averaged over users, per item-segment cell (each
/// user's outcomes restricted to the cell) and globally. `per_user` holds
/// one user's top-N outcomes per entry.
pub fn aggregate_discover(function: Function, per_user: &[Vec<RecommendationOutcome>]) -> MetricTable {
    let mut rows = Vec::with_capacity(10);
    let mut emit = |label: SegmentLabel, filter: &dyn Fn(&RecommendationOutcome) -> bool| {
        let mut precisions = Vec::new();
        let mut amis = Vec::new();
        let mut precision_support = 0u64;
        let mut ami_support = 0u64;
        let mut cell = Vec::new();
        for outcomes in per_user {
            cell.clear();
            cell.extend(outcomes.iter().filter(|o| filter(o)).copied());
            precision_support += cell.iter().filter(|o| o.evaluable()).count() as u64;
            ami_support += ami_terms(&cell).count() as u64;
            precisions.extend(precision_user(&cell));
            amis.extend(ami_user(&cell));
        }
        rows.push(MetricRow {
            function,
            metric: Metric::Precision,
            segment: label,
            value: mean(precisions),
            support: precision_support,
        });
        rows.push(MetricRow {
            function,
            metric: Metric::Ami,
            segment: label,
            value: mean(amis),
            support: ami_support,
        });
    };
    for seg in Segment::ALL {
        emit(SegmentLabel::Cell(seg), &|o| o.segment == seg);
    }
    emit(SegmentLabel::Global, &|_| true);
    MetricTable { rows }
}
