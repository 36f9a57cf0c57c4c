//! Aggregation of recorded responses across sessions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::CaseId;
use crate::elicitation::{
    GroupChoice, GroupCriterion, PairChoice, Question, QuestionSource, Response, Role, Session,
};

/// Responses needed for the strong-agreement flag, out of [`STRONG_AGREEMENT_OF`].
pub const STRONG_AGREEMENT: usize = 10;
pub const STRONG_AGREEMENT_OF: usize = 12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("EmptyMatrix: {0}")]
    EmptyMatrix(String),
    #[error("UnknownQuestion: {0:?}")]
    UnknownQuestion(String),
    #[error("UnknownParticipant: {0:?}")]
    UnknownParticipant(String),
    #[error("DuplicateParticipant: session {0:?} appears twice")]
    DuplicateParticipant(String),
    #[error("NoAnswers: participant {0:?} gave no yes/no answers for {1}")]
    NoAnswers(String, &'static str),
    #[error("UnknownCase: {0:?}")]
    UnknownCase(String),
}

impl AnalysisError {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisError::EmptyMatrix(_) => "EmptyMatrix",
            AnalysisError::UnknownQuestion(_) => "UnknownQuestion",
            AnalysisError::UnknownParticipant(_) => "UnknownParticipant",
            AnalysisError::DuplicateParticipant(_) => "DuplicateParticipant",
            AnalysisError::NoAnswers(..) => "NoAnswers",
            AnalysisError::UnknownCase(_) => "UnknownCase",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub session_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupColumn {
    pub question_id: String,
    pub attribute: String,
    pub criterion: GroupCriterion,
}

/// A pairwise column. Fixed pairs are keyed by their question id; randomly
/// drawn pairs by `session_id:question_id`, since each belongs to one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairColumn {
    pub key: String,
    pub case_a: CaseId,
    pub case_b: CaseId,
    pub source: QuestionSource,
}

/// Participants × questions grid. Rows are sorted by session id, so no
/// aggregate depends on the order sessions were supplied in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub participants: Vec<Participant>,
    pub group_columns: Vec<GroupColumn>,
    pub group: Vec<Vec<Option<GroupChoice>>>,
    pub pair_columns: Vec<PairColumn>,
    pub pairwise: Vec<Vec<Option<PairChoice>>>,
}

impl ResponseMatrix {
    pub fn from_sessions(sessions: &[Session]) -> Result<Self, AnalysisError> {
        let mut sorted: Vec<&Session> = sessions.iter().collect();
        sorted.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        for w in sorted.windows(2) {
            if w[0].session_id == w[1].session_id {
                return Err(AnalysisError::DuplicateParticipant(w[0].session_id.clone()));
            }
        }

        // attribute rank: earliest schema position across sessions, then name
        let mut rank: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &sorted {
            for (i, name) in s.feature_names.iter().enumerate() {
                let r = rank.entry(name).or_insert(i);
                *r = (*r).min(i);
            }
        }

        let mut group_cols: BTreeMap<(GroupCriterion, usize, String), GroupColumn> = BTreeMap::new();
        let mut pair_cols: BTreeMap<(bool, String), PairColumn> = BTreeMap::new();
        for s in &sorted {
            for q in s.served() {
                match q {
                    Question::GroupFairness(g) => {
                        let r = rank.get(g.attribute.as_str()).copied().unwrap_or(usize::MAX);
                        group_cols
                            .entry((g.criterion, r, g.attribute.clone()))
                            .or_insert_with(|| GroupColumn {
                                question_id: g.question_id.clone(),
                                attribute: g.attribute.clone(),
                                criterion: g.criterion,
                            });
                    }
                    Question::Pairwise(p) => {
                        let random = p.source == QuestionSource::Random;
                        let key = pair_key(s, &p.question_id, p.source);
                        pair_cols.entry((random, key.clone())).or_insert_with(|| PairColumn {
                            key,
                            case_a: p.case_a.clone(),
                            case_b: p.case_b.clone(),
                            source: p.source,
                        });
                    }
                }
            }
        }
        let group_columns: Vec<GroupColumn> = group_cols.into_values().collect();
        let pair_columns: Vec<PairColumn> = pair_cols.into_values().collect();
        let group_index: BTreeMap<&str, usize> = group_columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.question_id.as_str(), i))
            .collect();
        let pair_index: BTreeMap<&str, usize> = pair_columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.key.as_str(), i))
            .collect();

        let mut group = Vec::with_capacity(sorted.len());
        let mut pairwise = Vec::with_capacity(sorted.len());
        for s in &sorted {
            let sources: BTreeMap<&str, QuestionSource> = s
                .served()
                .filter_map(|q| match q {
                    Question::Pairwise(p) => Some((p.question_id.as_str(), p.source)),
                    _ => None,
                })
                .collect();
            let mut g_row = vec![None; group_columns.len()];
            let mut p_row = vec![None; pair_columns.len()];
            for r in s.responses() {
                match r {
                    Response::GroupFairness(g) => {
                        g_row[group_index[g.question_id.as_str()]] = Some(g.choice);
                    }
                    Response::Pairwise(p) => {
                        let key = pair_key(s, &p.question_id, sources[p.question_id.as_str()]);
                        p_row[pair_index[key.as_str()]] = Some(p.choice);
                    }
                }
            }
            group.push(g_row);
            pairwise.push(p_row);
        }
        Ok(ResponseMatrix {
            participants: sorted
                .iter()
                .map(|s| Participant {
                    session_id: s.session_id.clone(),
                    role: s.participant.role,
                })
                .collect(),
            group_columns,
            group,
            pair_columns,
            pairwise,
        })
    }

    fn participant_row(&self, session_id: &str) -> Result<usize, AnalysisError> {
        self.participants
            .iter()
            .position(|p| p.session_id == session_id)
            .ok_or_else(|| AnalysisError::UnknownParticipant(session_id.to_string()))
    }

    fn criterion_columns(&self, criterion: GroupCriterion) -> Vec<usize> {
        self.group_columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.criterion == criterion)
            .map(|(i, _)| i)
            .collect()
    }

    /// Every recorded pairwise cell as a judgment on its two cases.
    pub fn pair_judgments(&self) -> Vec<PairJudgment> {
        let mut out = Vec::new();
        for row in &self.pairwise {
            for (col, cell) in self.pair_columns.iter().zip(row) {
                if let Some(choice) = cell {
                    out.push(PairJudgment {
                        case_a: col.case_a.clone(),
                        case_b: col.case_b.clone(),
                        choice: *choice,
                    });
                }
            }
        }
        out
    }
}

fn pair_key(session: &Session, question_id: &str, source: QuestionSource) -> String {
    match source {
        QuestionSource::FixedFixture => question_id.to_string(),
        QuestionSource::Random => format!("{}:{question_id}", session.session_id),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSupport {
    pub attribute: String,
    pub yes: usize,
    pub no: usize,
    pub no_opinion: usize,
}

impl AttributeSupport {
    pub fn total(&self) -> usize {
        self.yes + self.no + self.no_opinion
    }
}

/// How participants split across all attributes of one criterion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSplit {
    pub all_yes: usize,
    pub all_no: usize,
    pub mixed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSupport {
    pub criterion: GroupCriterion,
    pub yes: usize,
    /// Recorded cells, no_opinion included.
    pub total: usize,
    pub support: f64,
    pub per_attribute: Vec<AttributeSupport>,
    pub split: ParticipantSplit,
}

pub fn criterion_support(
    matrix: &ResponseMatrix,
    criterion: GroupCriterion,
) -> Result<CriterionSupport, AnalysisError> {
    let cols = matrix.criterion_columns(criterion);
    let mut per_attribute: Vec<AttributeSupport> = cols
        .iter()
        .map(|&c| AttributeSupport {
            attribute: matrix.group_columns[c].attribute.clone(),
            ..Default::default()
        })
        .collect();
    let mut split = ParticipantSplit::default();
    for row in &matrix.group {
        let cells: Vec<GroupChoice> = cols.iter().filter_map(|&c| row[c]).collect();
        for (slot, &c) in per_attribute.iter_mut().zip(&cols) {
            match row[c] {
                Some(GroupChoice::Yes) => slot.yes += 1,
                Some(GroupChoice::No) => slot.no += 1,
                Some(GroupChoice::NoOpinion) => slot.no_opinion += 1,
                None => {}
            }
        }
        if cells.is_empty() {
            continue;
        }
        if cells.iter().all(|&c| c == GroupChoice::Yes) {
            split.all_yes += 1;
        } else if cells.iter().all(|&c| c == GroupChoice::No) {
            split.all_no += 1;
        } else {
            split.mixed += 1;
        }
    }
    let yes: usize = per_attribute.iter().map(|a| a.yes).sum();
    let total: usize = per_attribute.iter().map(AttributeSupport::total).sum();
    if total == 0 {
        return Err(AnalysisError::EmptyMatrix(format!(
            "no {} responses",
            criterion.as_str()
        )));
    }
    Ok(CriterionSupport {
        criterion,
        yes,
        total,
        support: yes as f64 / total as f64,
        per_attribute,
        split,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consensus {
    Unanimous,
    Majority,
    Contested,
}

impl Consensus {
    pub fn as_str(self) -> &'static str {
        match self {
            Consensus::Unanimous => "unanimous",
            Consensus::Majority => "majority",
            Consensus::Contested => "contested",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceCounts {
    pub equal: usize,
    pub prioritize_a: usize,
    pub prioritize_b: usize,
    pub not_comfortable: usize,
    pub no_opinion: usize,
}

impl ChoiceCounts {
    pub fn add(&mut self, choice: PairChoice) {
        *self.slot(choice) += 1;
    }

    fn slot(&mut self, choice: PairChoice) -> &mut usize {
        match choice {
            PairChoice::Equal => &mut self.equal,
            PairChoice::PrioritizeA => &mut self.prioritize_a,
            PairChoice::PrioritizeB => &mut self.prioritize_b,
            PairChoice::NotComfortable => &mut self.not_comfortable,
            PairChoice::NoOpinion => &mut self.no_opinion,
        }
    }

    pub fn get(&self, choice: PairChoice) -> usize {
        match choice {
            PairChoice::Equal => self.equal,
            PairChoice::PrioritizeA => self.prioritize_a,
            PairChoice::PrioritizeB => self.prioritize_b,
            PairChoice::NotComfortable => self.not_comfortable,
            PairChoice::NoOpinion => self.no_opinion,
        }
    }

    pub fn total(&self) -> usize {
        PairChoice::ALL.iter().map(|&c| self.get(c)).sum()
    }

    /// Most frequent substantive choice; ties go to the earlier of
    /// equal, prioritize_a, prioritize_b.
    pub fn leading(&self) -> Option<(PairChoice, usize)> {
        let mut best: Option<(PairChoice, usize)> = None;
        for c in PairChoice::ALL.into_iter().filter(|c| c.is_substantive()) {
            let n = self.get(c);
            if n > 0 && best.is_none_or(|(_, m)| n > m) {
                best = Some((c, n));
            }
        }
        best
    }

    /// Unanimous when every response is the same substantive choice; majority
    /// when one substantive choice holds strictly more than half of all
    /// responses; contested otherwise.
    pub fn classify(&self) -> Consensus {
        let total = self.total();
        match self.leading() {
            Some((_, n)) if n == total => Consensus::Unanimous,
            Some((_, n)) if 2 * n > total => Consensus::Majority,
            _ => Consensus::Contested,
        }
    }

    /// At least 10 of 12 responses (or the same proportion) agree on one
    /// substantive choice.
    pub fn strong_agreement(&self) -> bool {
        let total = self.total();
        total > 0
            && self
                .leading()
                .is_some_and(|(_, n)| n * STRONG_AGREEMENT_OF >= STRONG_AGREEMENT * total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRow {
    pub question: String,
    pub case_a: CaseId,
    pub case_b: CaseId,
    pub counts: ChoiceCounts,
    pub responses: usize,
    pub leading: Option<PairChoice>,
    pub classification: Consensus,
    pub strong_agreement: bool,
}

pub fn consensus_class(matrix: &ResponseMatrix, question: &str) -> Result<ConsensusRow, AnalysisError> {
    let col = matrix
        .pair_columns
        .iter()
        .position(|c| c.key == question)
        .ok_or_else(|| AnalysisError::UnknownQuestion(question.to_string()))?;
    let mut counts = ChoiceCounts::default();
    for row in &matrix.pairwise {
        if let Some(c) = row[col] {
            counts.add(c);
        }
    }
    let column = &matrix.pair_columns[col];
    Ok(ConsensusRow {
        question: column.key.clone(),
        case_a: column.case_a.clone(),
        case_b: column.case_b.clone(),
        counts,
        responses: counts.total(),
        leading: counts.leading().map(|(c, _)| c),
        classification: counts.classify(),
        strong_agreement: counts.strong_agreement(),
    })
}

/// Share of a participant's yes/no answers for `criterion` that agree with
/// their own modal answer. no_opinion cells are left out entirely.
pub fn consistency_score(
    matrix: &ResponseMatrix,
    session_id: &str,
    criterion: GroupCriterion,
) -> Result<f64, AnalysisError> {
    let row = &matrix.group[matrix.participant_row(session_id)?];
    let (mut yes, mut no) = (0usize, 0usize);
    for c in matrix.criterion_columns(criterion) {
        match row[c] {
            Some(GroupChoice::Yes) => yes += 1,
            Some(GroupChoice::No) => no += 1,
            _ => {}
        }
    }
    if yes + no == 0 {
        return Err(AnalysisError::NoAnswers(session_id.to_string(), criterion.as_str()));
    }
    Ok(yes.max(no) as f64 / (yes + no) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub session_id: String,
    pub role: Role,
    pub criterion: GroupCriterion,
    pub score: f64,
}

/// Scores for every (participant, criterion) with at least one yes/no answer.
pub fn consistency_table(matrix: &ResponseMatrix) -> Vec<ConsistencyEntry> {
    let mut out = Vec::new();
    for p in &matrix.participants {
        for criterion in GroupCriterion::ALL {
            if let Ok(score) = consistency_score(matrix, &p.session_id, criterion) {
                out.push(ConsistencyEntry {
                    session_id: p.session_id.clone(),
                    role: p.role,
                    criterion,
                    score,
                });
            }
        }
    }
    out
}

pub fn mean_consistency(matrix: &ResponseMatrix) -> Result<f64, AnalysisError> {
    let table = consistency_table(matrix);
    if table.is_empty() {
        return Err(AnalysisError::EmptyMatrix("no yes/no group answers".into()));
    }
    Ok(table.iter().map(|e| e.score).sum::<f64>() / table.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairJudgment {
    pub case_a: CaseId,
    pub case_b: CaseId,
    pub choice: PairChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BordaEntry {
    pub case_id: CaseId,
    pub score: f64,
    /// Another case has the same score.
    pub tied: bool,
}

/// Cases in priority order: descending score, ties broken by case id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BordaResult {
    pub ranking: Vec<BordaEntry>,
    pub has_ties: bool,
}

impl BordaResult {
    pub fn score(&self, id: &CaseId) -> Option<f64> {
        self.ranking.iter().find(|e| &e.case_id == id).map(|e| e.score)
    }
}

/// Points per response: prioritize_a gives a 1 and b 0, prioritize_b the
/// reverse, equal gives each half a point; abstentions score nothing.
pub fn borda_aggregate(
    cases: &[CaseId],
    judgments: &[PairJudgment],
) -> Result<BordaResult, AnalysisError> {
    // half-points keep the arithmetic exact
    let mut halves: BTreeMap<&CaseId, u64> = cases.iter().map(|c| (c, 0)).collect();
    for j in judgments {
        for id in [&j.case_a, &j.case_b] {
            if !halves.contains_key(id) {
                return Err(AnalysisError::UnknownCase(id.to_string()));
            }
        }
        let (a, b) = match j.choice {
            PairChoice::PrioritizeA => (2, 0),
            PairChoice::PrioritizeB => (0, 2),
            PairChoice::Equal => (1, 1),
            PairChoice::NotComfortable | PairChoice::NoOpinion => continue,
        };
        *halves.get_mut(&j.case_a).expect("checked") += a;
        *halves.get_mut(&j.case_b).expect("checked") += b;
    }
    let mut order: Vec<(&CaseId, u64)> = halves.into_iter().collect();
    order.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    let mut frequency: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, h) in &order {
        *frequency.entry(*h).or_default() += 1;
    }
    let ranking: Vec<BordaEntry> = order
        .into_iter()
        .map(|(id, h)| BordaEntry {
            case_id: id.clone(),
            score: h as f64 / 2.0,
            tied: frequency[&h] > 1,
        })
        .collect();
    Ok(BordaResult {
        has_ties: ranking.iter().any(|e| e.tied),
        ranking,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub participants: usize,
    pub roles: BTreeMap<String, usize>,
    pub support: Vec<CriterionSupport>,
    pub consensus: Vec<ConsensusRow>,
    pub consistency: Vec<ConsistencyEntry>,
    pub mean_consistency: Option<f64>,
}

/// Support for each criterion with responses, consensus for each fixed pair,
/// and consistency scores.
pub fn summarize(matrix: &ResponseMatrix) -> Result<AggregateSummary, AnalysisError> {
    if matrix.participants.is_empty() {
        return Err(AnalysisError::EmptyMatrix("no sessions".into()));
    }
    let mut roles = BTreeMap::new();
    for p in &matrix.participants {
        let role = serde_json::to_value(p.role).expect("role serializes");
        *roles
            .entry(role.as_str().unwrap_or_default().to_string())
            .or_default() += 1;
    }
    let criteria: BTreeSet<GroupCriterion> =
        matrix.group_columns.iter().map(|c| c.criterion).collect();
    let support = criteria
        .into_iter()
        .map(|c| criterion_support(matrix, c))
        .collect::<Result<Vec<_>, _>>()?;
    let consensus = matrix
        .pair_columns
        .iter()
        .filter(|c| c.source == QuestionSource::FixedFixture)
        .map(|c| consensus_class(matrix, &c.key))
        .collect::<Result<Vec<_>, _>>()?;
    let consistency = consistency_table(matrix);
    Ok(AggregateSummary {
        participants: matrix.participants.len(),
        roles,
        support,
        consensus,
        mean_consistency: mean_consistency(matrix).ok(),
        consistency,
    })
}

impl AggregateSummary {
    /// One row per criterion: `criterion,yes,total,support`.
    pub fn support_csv(&self) -> String {
        crate::wire::csv_table(
            &["criterion", "yes", "total", "support"],
            self.support
                .iter()
                .map(|s| {
                    vec![
                        s.criterion.as_str().to_string(),
                        s.yes.to_string(),
                        s.total.to_string(),
                        format!("{:.3}", s.support),
                    ]
                })
                .collect(),
        )
    }

    /// One row per (criterion, attribute) bar.
    pub fn attribute_csv(&self) -> String {
        let mut rows = Vec::new();
        for s in &self.support {
            for a in &s.per_attribute {
                rows.push(vec![
                    s.criterion.as_str().to_string(),
                    a.attribute.clone(),
                    a.yes.to_string(),
                    a.no.to_string(),
                    a.no_opinion.to_string(),
                    a.total().to_string(),
                ]);
            }
        }
        crate::wire::csv_table(&["criterion", "attribute", "yes", "no", "no_opinion", "total"], rows)
    }

    /// One row per fixed pair with its response counts and classification.
    pub fn pair_csv(&self) -> String {
        crate::wire::csv_table(
            &[
                "question",
                "equal",
                "prioritize_a",
                "prioritize_b",
                "not_comfortable",
                "no_opinion",
                "classification",
                "strong_agreement",
            ],
            self.consensus
                .iter()
                .map(|r| {
                    let mut row = vec![r.question.clone()];
                    row.extend(PairChoice::ALL.iter().map(|&c| r.counts.get(c).to_string()));
                    row.push(r.classification.as_str().to_string());
                    row.push(r.strong_agreement.to_string());
                    row
                })
                .collect(),
        )
    }

    /// One row per (participant, criterion) consistency score.
    pub fn consistency_csv(&self) -> String {
        crate::wire::csv_table(
            &["session_id", "role", "criterion", "consistency"],
            self.consistency
                .iter()
                .map(|e| {
                    let role = serde_json::to_value(e.role).expect("role serializes");
                    vec![
                        e.session_id.clone(),
                        role.as_str().unwrap_or_default().to_string(),
                        e.criterion.as_str().to_string(),
                        format!("{:.3}", e.score),
                    ]
                })
                .collect(),
        )
    }
}
