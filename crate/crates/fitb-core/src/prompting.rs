//! Few-shot prompt assembly under unit budgets.
//!
//! Prompts are built from already-constructed examples rendered through a
//! template, with three budget constraints: each shot must fit in
//! `per_shot` units, the whole prompt in `prompt` units, and a query
//! rendered against the prompt must fit in `query_reserve` units or it is
//! skipped. Units default to whitespace word counts; plug in a real
//! tokenizer through [`UnitCounter`] to reproduce token budgets.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::blanking::FitBExample;
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("only {eligible} pool examples fit in {per_shot} units, need {requested}")]
    InsufficientExamples {
        eligible: usize,
        requested: usize,
        per_shot: usize,
    },
    #[error("rendered prompt is {units} units, budget {budget}")]
    BudgetExceeded { units: usize, budget: usize },
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

/// Unit budgets for prompt assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetConfig {
    /// Max units of a single rendered shot.
    pub per_shot: usize,
    /// Max units of the whole rendered prompt.
    pub prompt: usize,
    /// Max units of a rendered query.
    pub query_reserve: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            per_shot: 100,
            prompt: 300,
            query_reserve: 212,
        }
    }
}

/// Counts the token units of a rendered string.
pub trait UnitCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Default counter: whitespace-separated words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceUnits;

impl UnitCounter for WhitespaceUnits {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Render frames for shots and queries.
///
/// Frames use `{left}`, `{marker}`, `{right}`, `{length}` and (shots only)
/// `{target}` slots, each exactly once. Runs of spaces left by empty slots
/// collapse to one, and spaces before newlines are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub blank_marker: String,
    pub example_frame: String,
    pub query_frame: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            blank_marker: "____".to_owned(),
            example_frame:
                "Passage: {left} {marker} {right}\nFill in the blank with about {length} words: {target}\n\n"
                    .to_owned(),
            query_frame:
                "Passage: {left} {marker} {right}\nFill in the blank with about {length} words:"
                    .to_owned(),
        }
    }
}

const SHOT_SLOTS: [&str; 5] = ["left", "marker", "right", "length", "target"];
const QUERY_SLOTS: [&str; 4] = ["left", "marker", "right", "length"];

fn slot_count(frame: &str, slot: &str) -> usize {
    frame.matches(&format!("{{{slot}}}")).count()
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        for slot in SHOT_SLOTS {
            if slot_count(&self.example_frame, slot) != 1 {
                return Err(PromptError::InvalidTemplate(format!(
                    "example frame must contain {{{slot}}} exactly once"
                )));
            }
        }
        for slot in QUERY_SLOTS {
            if slot_count(&self.query_frame, slot) != 1 {
                return Err(PromptError::InvalidTemplate(format!(
                    "query frame must contain {{{slot}}} exactly once"
                )));
            }
        }
        if slot_count(&self.query_frame, "target") != 0 {
            return Err(PromptError::InvalidTemplate(
                "query frame must not contain {target}".into(),
            ));
        }
        Ok(())
    }
}

fn substitute(frame: &str, example: &FitBExample, marker: &str, with_target: bool) -> String {
    let mut out = String::with_capacity(frame.len() + 128);
    let mut rest = frame;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        match after.find('}') {
            Some(close) => {
                let name = &after[1..close];
                let handled = match name {
                    "left" => {
                        out.push_str(&example.left.join(" "));
                        true
                    }
                    "right" => {
                        out.push_str(&example.right.join(" "));
                        true
                    }
                    "marker" => {
                        out.push_str(marker);
                        true
                    }
                    "length" => {
                        out.push_str(&example.bucket.to_string());
                        true
                    }
                    "target" if with_target => {
                        out.push_str(&example.target.join(" "));
                        true
                    }
                    _ => false,
                };
                if !handled {
                    out.push_str(&after[..=close]);
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(after);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    tidy_spaces(&out)
}

/// Collapse space runs from empty slots and drop spaces against newlines.
fn tidy_spaces(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch == ' ' {
            match out.chars().last() {
                Some(' ') | Some('\n') => continue,
                _ => out.push(' '),
            }
        } else {
            if ch == '\n' && out.ends_with(' ') {
                out.pop();
            }
            out.push(ch);
        }
    }
    out
}

/// A rendered few-shot prompt.
#[derive(Debug, Clone, Serialize)]
pub struct FewShotPrompt {
    pub shot_ids: Vec<String>,
    pub shot_units: Vec<usize>,
    pub rendered: String,
    pub unit_count: usize,
}

/// Outcome of rendering one query against a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutcome {
    /// Prompt plus query text, ready for a continuation model.
    Rendered { text: String, units: usize },
    /// The query alone exceeded the reserve budget.
    Skipped { units: usize },
}

/// Per-eval-set skip accounting.
#[derive(Debug, Clone, Serialize)]
pub struct SkipReport {
    pub rendered: Vec<RenderedQuery>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenderedQuery {
    pub example_id: String,
    pub text: String,
    pub units: usize,
}

/// Builds prompts and queries under a template, budget, and unit counter.
pub struct PromptBuilder {
    template: PromptTemplate,
    budget: BudgetConfig,
    counter: Box<dyn UnitCounter>,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::new(PromptTemplate::default(), BudgetConfig::default())
    }
}

impl PromptBuilder {
    pub fn new(template: PromptTemplate, budget: BudgetConfig) -> Self {
        Self {
            template,
            budget,
            counter: Box::new(WhitespaceUnits),
        }
    }

    pub fn with_counter(mut self, counter: Box<dyn UnitCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn budget(&self) -> BudgetConfig {
        self.budget
    }

    /// Render one pool example as a shot (target included).
    pub fn render_shot(&self, example: &FitBExample) -> String {
        substitute(
            &self.template.example_frame,
            example,
            &self.template.blank_marker,
            true,
        )
    }

    /// Render one example as a query (no target).
    pub fn render_query_text(&self, example: &FitBExample) -> String {
        substitute(
            &self.template.query_frame,
            example,
            &self.template.blank_marker,
            false,
        )
    }

    /// Sample `k` shots without replacement from the pool examples that fit
    /// the per-shot budget, in sampled order.
    pub fn build_prompt(
        &self,
        pool: &[FitBExample],
        k: usize,
        seed: u64,
    ) -> Result<FewShotPrompt, PromptError> {
        self.template.validate()?;
        let eligible: Vec<(usize, String, usize)> = pool
            .iter()
            .enumerate()
            .filter_map(|(i, example)| {
                let rendered = self.render_shot(example);
                let units = self.counter.count(&rendered);
                (units <= self.budget.per_shot).then_some((i, rendered, units))
            })
            .collect();
        if eligible.len() < k {
            return Err(PromptError::InsufficientExamples {
                eligible: eligible.len(),
                requested: k,
                per_shot: self.budget.per_shot,
            });
        }
        let mut order: Vec<usize> = (0..eligible.len()).collect();
        let mut rng = derive_rng(seed, &["fewshot-sample"]);
        for i in 0..k {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }
        let mut rendered = String::new();
        let mut shot_ids = Vec::with_capacity(k);
        let mut shot_units = Vec::with_capacity(k);
        for &slot in &order[..k] {
            let (pool_index, shot, units) = &eligible[slot];
            rendered.push_str(shot);
            shot_ids.push(pool[*pool_index].id.clone());
            shot_units.push(*units);
        }
        let unit_count = self.counter.count(&rendered);
        if unit_count > self.budget.prompt {
            return Err(PromptError::BudgetExceeded {
                units: unit_count,
                budget: self.budget.prompt,
            });
        }
        Ok(FewShotPrompt {
            shot_ids,
            shot_units,
            rendered,
            unit_count,
        })
    }

    /// Append a query to the prompt, or skip it when the query alone
    /// exceeds the reserve budget.
    pub fn render_query(&self, example: &FitBExample, prompt: &FewShotPrompt) -> QueryOutcome {
        let query = self.render_query_text(example);
        let units = self.counter.count(&query);
        if units > self.budget.query_reserve {
            return QueryOutcome::Skipped { units };
        }
        QueryOutcome::Rendered {
            text: format!("{}{}", prompt.rendered, query),
            units,
        }
    }

    /// Render every example as a query, counting skips.
    pub fn skip_report(&self, examples: &[FitBExample], prompt: &FewShotPrompt) -> SkipReport {
        let mut rendered = Vec::new();
        let mut skipped = 0;
        for example in examples {
            match self.render_query(example, prompt) {
                QueryOutcome::Rendered { text, units } => rendered.push(RenderedQuery {
                    example_id: example.id.clone(),
                    text,
                    units,
                }),
                QueryOutcome::Skipped { .. } => skipped += 1,
            }
        }
        SkipReport { rendered, skipped }
    }
}
