//! Evaluation dimensions and prompt construction.
//!
//! This module owns the registry of scoring dimensions (five for comparative
//! summaries, seven for per-product opinion summaries) and builds the three
//! kinds of prompts the pipeline sends to a model backend:
//!
//! * opinion-summary generation for a single product,
//! * comparative-summary generation for a query and its three products
//!   (either from opinion summaries or from the raw listings), and
//! * single-dimension evaluation of a previously generated summary.
//!
//! All prompts are rendered from [`PromptTemplate`]s; the defaults are
//! compiled in via `include_str!` and can be replaced per template id.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::{ProductRecord, Review, PRODUCTS_PER_QUERY};
use crate::template::{PromptTemplate, TemplateError};

/// Lowest valid rating on the evaluation scale.
pub const SCALE_MIN: u8 = 1;
/// Highest valid rating on the evaluation scale.
pub const SCALE_MAX: u8 = 5;

/// The literal final line of every evaluation prompt. Score extraction and
/// the mock backend both key off this exact sentence.
pub const SCORING_INSTRUCTION: &str =
    "End your response with a final line of exactly: Score: <integer 1-5>";

/// Identifies one scoring dimension.
///
/// The first five apply to comparative summaries; the remaining seven apply
/// to per-product opinion summaries. `MosFaithfulness` is kept distinct from
/// `Faithfulness` because the two are judged against different inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionId {
    Clarity,
    Faithfulness,
    Informativeness,
    FormatAdherence,
    QueryRelevance,
    Fluency,
    Coherence,
    Relevance,
    MFaithfulness,
    AspectCoverage,
    SentimentConsistency,
    Specificity,
}

/// Comparative-summary dimensions in canonical reporting order.
pub const CES_DIMENSIONS: [DimensionId; 5] = [
    DimensionId::Clarity,
    DimensionId::Faithfulness,
    DimensionId::Informativeness,
    DimensionId::FormatAdherence,
    DimensionId::QueryRelevance,
];

/// Opinion-summary dimensions in canonical reporting order.
pub const MOS_DIMENSIONS: [DimensionId; 7] = [
    DimensionId::Fluency,
    DimensionId::Coherence,
    DimensionId::Relevance,
    DimensionId::MFaithfulness,
    DimensionId::AspectCoverage,
    DimensionId::SentimentConsistency,
    DimensionId::Specificity,
];

impl DimensionId {
    /// Every dimension, comparative first, in canonical order.
    pub fn all() -> [DimensionId; 12] {
        [
            DimensionId::Clarity,
            DimensionId::Faithfulness,
            DimensionId::Informativeness,
            DimensionId::FormatAdherence,
            DimensionId::QueryRelevance,
            DimensionId::Fluency,
            DimensionId::Coherence,
            DimensionId::Relevance,
            DimensionId::MFaithfulness,
            DimensionId::AspectCoverage,
            DimensionId::SentimentConsistency,
            DimensionId::Specificity,
        ]
    }

    /// Stable identifier used in file formats, CLI arguments, and template ids.
    pub fn as_str(&self) -> &'static str {
        match self {
            DimensionId::Clarity => "clarity",
            DimensionId::Faithfulness => "faithfulness",
            DimensionId::Informativeness => "informativeness",
            DimensionId::FormatAdherence => "format_adherence",
            DimensionId::QueryRelevance => "query_relevance",
            DimensionId::Fluency => "fluency",
            DimensionId::Coherence => "coherence",
            DimensionId::Relevance => "relevance",
            DimensionId::MFaithfulness => "m_faithfulness",
            DimensionId::AspectCoverage => "aspect_coverage",
            DimensionId::SentimentConsistency => "sentiment_consistency",
            DimensionId::Specificity => "specificity",
        }
    }

    /// Parses a stable identifier back into a dimension.
    pub fn parse(s: &str) -> Option<DimensionId> {
        DimensionId::all().into_iter().find(|d| d.as_str() == s)
    }

    /// True for the five comparative-summary dimensions.
    pub fn is_comparative(&self) -> bool {
        CES_DIMENSIONS.contains(self)
    }

    /// Human-oriented rubric text handed to the evaluator prompt.
    pub fn criteria(&self) -> &'static str {
        match self {
            DimensionId::Clarity => {
                "Clarity measures the degree to which the information in the comparative \
                 summary is clearly presented, avoiding ambiguity, so that the comparison \
                 between the products is easy to understand. A top summary is concise, \
                 prefers plain language over jargon, reads without grammatical errors, and \
                 flows logically from the table to the verdict, making the differences \
                 between the products immediately visible."
            }
            DimensionId::Faithfulness => {
                "Faithfulness measures the degree to which the information in the \
                 comparative summary is accurate, verifiable, and directly supported by the \
                 input data. Every detail - attributes, prices, ratings, pros, and cons of \
                 each product - must be traceable to the input. Penalize any claim that \
                 cannot be verified from the input data and any generalization the input \
                 does not support."
            }
            DimensionId::Informativeness => {
                "Informativeness evaluates the extent to which the comparative summary \
                 covers all relevant aspects and attributes of the products being compared: \
                 titles, base and final prices, average ratings, the attributes selected \
                 for the comparison, pros, and cons. Reward thorough coverage of the most \
                 discussed aspects; penalize omission of significant aspects. Missing \
                 values should be marked as missing rather than silently dropped."
            }
            DimensionId::FormatAdherence => {
                "Format adherence evaluates the extent to which the comparative summary \
                 follows the prescribed format: first a tabular comparison with products as \
                 columns and attributes as rows - including base price, final price, \
                 average rating, pros, cons, and concretely named dynamically selected \
                 attributes - and then a final verdict section giving a concise overview of \
                 the comparison. Assess the presence, completeness, and formatting of both \
                 components."
            }
            DimensionId::QueryRelevance => {
                "Query relevance evaluates how well the comparative summary addresses the \
                 user's query. The table should carry the attributes most relevant to that \
                 query, and the final verdict must answer it directly with clear \
                 suggestions that let the user make an informed buying decision. Measure \
                 the overall usefulness of the summary for this specific query."
            }
            DimensionId::Fluency => {
                "Fluency measures whether the opinion summary is grammatical, natural, and \
                 easy to read, with well-formed sentences and no distracting errors."
            }
            DimensionId::Coherence => {
                "Coherence measures whether the opinion summary forms a logically \
                 connected whole, with ideas that follow from one another rather than a \
                 disjointed list of facts."
            }
            DimensionId::Relevance => {
                "Relevance measures whether the opinion summary carries the information \
                 that matters about this product, drawn from its reviews and metadata, \
                 without digressions or filler."
            }
            DimensionId::MFaithfulness => {
                "Faithfulness measures whether every statement in the opinion summary is \
                 supported by the product's reviews and metadata, with no invented details \
                 and no unsupported claims."
            }
            DimensionId::AspectCoverage => {
                "Aspect coverage measures whether the opinion summary addresses the major \
                 aspects discussed in the reviews and metadata, such as quality, \
                 performance, usability, and value."
            }
            DimensionId::SentimentConsistency => {
                "Sentiment consistency measures whether the overall sentiment of the \
                 opinion summary agrees with the sentiment of the underlying reviews and \
                 the average rating, exaggerating neither praise nor criticism."
            }
            DimensionId::Specificity => {
                "Specificity measures whether the opinion summary makes concrete, \
                 product-specific statements rather than generic claims that could apply \
                 to any product."
            }
        }
    }

    /// Template id of this dimension's evaluation prompt.
    pub fn template_id(&self) -> String {
        format!("eval_{}", self.as_str())
    }
}

impl core::fmt::Display for DimensionId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which inputs a comparative-summary prompt is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CesMode {
    /// Condense each product to an opinion summary first, then compare.
    Mos,
    /// Compare directly from the raw product listings and reviews.
    Dia,
}

impl CesMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CesMode::Mos => "mos",
            CesMode::Dia => "dia",
        }
    }

    pub fn parse(s: &str) -> Option<CesMode> {
        match s {
            "mos" => Some(CesMode::Mos),
            "dia" => Some(CesMode::Dia),
            _ => None,
        }
    }
}

impl core::fmt::Display for CesMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully rendered prompt, ready to submit to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_message: String,
    pub user_message: String,
}

impl RenderedPrompt {
    /// Stable content hash of the prompt pair; identical prompts collide,
    /// any textual difference separates them.
    pub fn fingerprint(&self) -> String {
        crate::mock::fingerprint(&self.system_message, &self.user_message)
    }

    /// Number of whitespace-separated words across both messages. Used for
    /// input-size accounting in latency comparisons.
    pub fn word_count(&self) -> usize {
        crate::text::word_count(&self.system_message) + crate::text::word_count(&self.user_message)
    }
}

/// Errors raised while building a prompt.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("invalid product {product_id}: {source}")]
    InvalidProduct {
        product_id: String,
        source: crate::catalog::InvariantViolation,
    },
    #[error("query text is empty")]
    EmptyQuery,
    #[error("summary text is empty")]
    EmptySummary,
    #[error("opinion summary missing for product {product_id}")]
    MissingOpinionSummary { product_id: String },
    #[error("expected {PRODUCTS_PER_QUERY} products, got {got}")]
    ProductCount { got: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// The template ids every [`TemplateSet`] must provide.
fn builtin_templates() -> Vec<(&'static str, &'static str)> {
    alloc::vec![
        ("mos_gen", include_str!("../templates/mos_gen.txt")),
        ("ces_gen_mos", include_str!("../templates/ces_gen_mos.txt")),
        ("ces_gen_dia", include_str!("../templates/ces_gen_dia.txt")),
        ("eval_clarity", include_str!("../templates/eval_clarity.txt")),
        (
            "eval_faithfulness",
            include_str!("../templates/eval_faithfulness.txt")
        ),
        (
            "eval_informativeness",
            include_str!("../templates/eval_informativeness.txt")
        ),
        (
            "eval_format_adherence",
            include_str!("../templates/eval_format_adherence.txt")
        ),
        (
            "eval_query_relevance",
            include_str!("../templates/eval_query_relevance.txt")
        ),
        ("eval_fluency", include_str!("../templates/eval_fluency.txt")),
        (
            "eval_coherence",
            include_str!("../templates/eval_coherence.txt")
        ),
        (
            "eval_relevance",
            include_str!("../templates/eval_relevance.txt")
        ),
        (
            "eval_m_faithfulness",
            include_str!("../templates/eval_m_faithfulness.txt")
        ),
        (
            "eval_aspect_coverage",
            include_str!("../templates/eval_aspect_coverage.txt")
        ),
        (
            "eval_sentiment_consistency",
            include_str!("../templates/eval_sentiment_consistency.txt")
        ),
        (
            "eval_specificity",
            include_str!("../templates/eval_specificity.txt")
        ),
    ]
}

/// The set of prompt templates the pipeline renders from.
///
/// Defaults are compiled into the binary; individual templates can be
/// overridden by id (e.g. from files on disk in the companion crate).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        for (id, raw) in builtin_templates() {
            templates.insert(id.to_string(), PromptTemplate::parse(id, raw));
        }
        TemplateSet { templates }
    }
}

impl TemplateSet {
    /// Replaces (or adds) one template.
    pub fn set(&mut self, template: PromptTemplate) {
        self.templates
            .insert(template.template_id.clone(), template);
    }

    /// Looks up a template by id.
    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(id)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    /// Ids of all templates in the set, sorted.
    pub fn ids(&self) -> Vec<&str> {
        self.templates.keys().map(|k| k.as_str()).collect()
    }

    /// Builds the opinion-summary generation prompt for one product.
    pub fn render_mos_generation(
        &self,
        product: &ProductRecord,
    ) -> Result<RenderedPrompt, PromptError> {
        product
            .validate()
            .map_err(|source| PromptError::InvalidProduct {
                product_id: product.product_id.clone(),
                source,
            })?;
        let template = self.get("mos_gen")?;
        let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
        bindings.insert("title", product.title.clone());
        bindings.insert("description", section_or(product.description.trim(), "(none)"));
        bindings.insert("key_features", bullet_list(&product.key_features, "(none)"));
        bindings.insert("specifications", spec_list(product));
        bindings.insert("reviews", review_list(&product.reviews));
        bindings.insert("average_rating", format_rating(product.average_rating));
        Ok(RenderedPrompt {
            system_message: template.render_system(&bindings)?,
            user_message: template.render(&bindings)?,
        })
    }

    /// Builds the comparative-summary generation prompt for a query and its
    /// three products.
    ///
    /// In [`CesMode::Mos`] every product must come with its opinion summary;
    /// in [`CesMode::Dia`] the prompt embeds the raw listing data instead.
    pub fn render_ces_generation(
        &self,
        query: &str,
        products: &[CesProductInput],
        mode: CesMode,
    ) -> Result<RenderedPrompt, PromptError> {
        if query.trim().is_empty() {
            return Err(PromptError::EmptyQuery);
        }
        if products.len() != PRODUCTS_PER_QUERY {
            return Err(PromptError::ProductCount {
                got: products.len(),
            });
        }
        for input in products {
            input
                .product
                .validate()
                .map_err(|source| PromptError::InvalidProduct {
                    product_id: input.product.product_id.clone(),
                    source,
                })?;
        }
        let template = match mode {
            CesMode::Mos => self.get("ces_gen_mos")?,
            CesMode::Dia => self.get("ces_gen_dia")?,
        };
        let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
        bindings.insert("query", query.trim().to_string());
        // Placeholder names are static strings; leak-free interning is not
        // worth it for six fixed slots, so enumerate them explicitly.
        let slots: [[&str; 6]; 3] = [
            [
                "product_1_title",
                "product_1_base_price",
                "product_1_final_price",
                "product_1_rating",
                "product_1_summary",
                "product_1_data",
            ],
            [
                "product_2_title",
                "product_2_base_price",
                "product_2_final_price",
                "product_2_rating",
                "product_2_summary",
                "product_2_data",
            ],
            [
                "product_3_title",
                "product_3_base_price",
                "product_3_final_price",
                "product_3_rating",
                "product_3_summary",
                "product_3_data",
            ],
        ];
        for (input, names) in products.iter().zip(slots.iter()) {
            let p = &input.product;
            bindings.insert(names[0], p.title.clone());
            bindings.insert(names[1], format_price(&p.base_price));
            bindings.insert(names[2], format_price(&p.final_price));
            bindings.insert(names[3], format_rating(p.average_rating));
            match mode {
                CesMode::Mos => {
                    let summary = input.opinion_summary.as_deref().unwrap_or("");
                    if summary.trim().is_empty() {
                        return Err(PromptError::MissingOpinionSummary {
                            product_id: p.product_id.clone(),
                        });
                    }
                    bindings.insert(names[4], summary.trim().to_string());
                }
                CesMode::Dia => {
                    bindings.insert(names[5], source_block(p));
                }
            }
        }
        Ok(RenderedPrompt {
            system_message: template.render_system(&bindings)?,
            user_message: template.render(&bindings)?,
        })
    }

    /// Builds the evaluation prompt scoring `summary` on one dimension.
    ///
    /// Which parts of `context` end up in the prompt is decided by the
    /// dimension's template: surface-level dimensions see only the summary,
    /// grounded dimensions additionally see the source data, and
    /// query-dependent dimensions see the query.
    pub fn render_evaluation(
        &self,
        dimension: DimensionId,
        summary: &str,
        context: &EvalContext,
    ) -> Result<RenderedPrompt, PromptError> {
        if summary.trim().is_empty() {
            return Err(PromptError::EmptySummary);
        }
        let template = self.get(&dimension.template_id())?;
        let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
        bindings.insert("criteria", dimension.criteria().to_string());
        bindings.insert("summary", summary.trim().to_string());
        bindings.insert("query", context.query.trim().to_string());
        bindings.insert("sources", context.sources_text());
        Ok(RenderedPrompt {
            system_message: template.render_system(&bindings)?,
            user_message: template.render(&bindings)?,
        })
    }
}

/// One product's contribution to a comparative-summary prompt.
#[derive(Debug, Clone)]
pub struct CesProductInput {
    pub product: ProductRecord,
    /// Required in [`CesMode::Mos`]; ignored in [`CesMode::Dia`].
    pub opinion_summary: Option<String>,
}

/// Auxiliary inputs an evaluation prompt may draw on.
#[derive(Debug, Clone, Default)]
pub struct EvalContext {
    /// The user query the summary was generated for; empty when the
    /// dimension does not involve a query.
    pub query: String,
    /// Pre-rendered source blocks, one per grounding product.
    pub sources: Vec<String>,
}

impl EvalContext {
    /// Context for a comparative summary: the query plus all three products.
    pub fn for_comparison(query: &str, products: &[ProductRecord]) -> EvalContext {
        EvalContext {
            query: query.to_string(),
            sources: products.iter().map(titled_source_block).collect(),
        }
    }

    /// Context for an opinion summary: its single grounding product.
    pub fn for_product(product: &ProductRecord) -> EvalContext {
        EvalContext {
            query: String::new(),
            sources: alloc::vec![titled_source_block(product)],
        }
    }

    fn sources_text(&self) -> String {
        if self.sources.is_empty() {
            "(none)".to_string()
        } else {
            self.sources.join("\n\n")
        }
    }
}

/// Renders a product's free-text sections (everything except the metadata
/// lines the templates place themselves).
fn source_block(p: &ProductRecord) -> String {
    format!(
        "Description:\n{}\nKey Features:\n{}\nSpecifications:\n{}\nReviews:\n{}",
        section_or(p.description.trim(), "(none)"),
        bullet_list(&p.key_features, "(none)"),
        spec_list(p),
        review_list(&p.reviews),
    )
}

/// Full standalone description of one product, for evaluation contexts.
fn titled_source_block(p: &ProductRecord) -> String {
    format!(
        "Title: {}\nBase Price: {}\nFinal Price: {}\nAverage Rating: {}\n{}",
        p.title,
        format_price(&p.base_price),
        format_price(&p.final_price),
        format_rating(p.average_rating),
        source_block(p),
    )
}

fn section_or(text: &str, empty: &str) -> String {
    if text.is_empty() {
        empty.to_string()
    } else {
        text.to_string()
    }
}

fn bullet_list(items: &[String], empty: &str) -> String {
    if items.is_empty() {
        return empty.to_string();
    }
    let lines: Vec<String> = items.iter().map(|i| format!("- {}", i.trim())).collect();
    lines.join("\n")
}

fn spec_list(p: &ProductRecord) -> String {
    if p.specifications.is_empty() {
        return "(none)".to_string();
    }
    let lines: Vec<String> = p
        .specifications
        .iter()
        .map(|s| format!("- {}: {}", s.name.trim(), s.value.trim()))
        .collect();
    lines.join("\n")
}

fn review_list(reviews: &[Review]) -> String {
    if reviews.is_empty() {
        return "(no reviews)".to_string();
    }
    let lines: Vec<String> = reviews
        .iter()
        .map(|r| match r.rating {
            Some(stars) => format!("- {} (rating: {}/5)", r.text.trim(), stars),
            None => format!("- {}", r.text.trim()),
        })
        .collect();
    lines.join("\n")
}

fn format_rating(rating: f64) -> String {
    format!("{rating:.1}")
}

fn format_price(price: &crate::catalog::Price) -> String {
    format!("{} {}", price.amount, price.currency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Price, SpecEntry};

    fn product(id: &str, title: &str) -> ProductRecord {
        ProductRecord {
            product_id: id.to_string(),
            title: title.to_string(),
            description: "A compact mechanical keyboard for travel.".to_string(),
            key_features: alloc::vec!["hot-swappable switches".to_string()],
            specifications: alloc::vec![SpecEntry {
                name: "layout".to_string(),
                value: "65 percent".to_string(),
            }],
            reviews: alloc::vec![Review {
                text: "Types great and fits in my bag.".to_string(),
                rating: Some(5),
            }],
            average_rating: 4.5,
            base_price: Price::new("89.99", "USD"),
            final_price: Price::new("79.99", "USD"),
        }
    }

    fn ces_inputs() -> Vec<CesProductInput> {
        ["p1", "p2", "p3"]
            .iter()
            .enumerate()
            .map(|(i, id)| CesProductInput {
                product: product(id, &format!("Keyboard model {}", i + 1)),
                opinion_summary: Some(format!("Opinion summary for product {}.", i + 1)),
            })
            .collect()
    }

    #[test]
    fn mos_prompt_has_sections_in_order() {
        let ts = TemplateSet::default();
        let rendered = ts.render_mos_generation(&product("p1", "Travel Keyboard")).unwrap();
        let body = &rendered.user_message;
        let labels = [
            "Title:",
            "Description:",
            "Key Features:",
            "Specifications:",
            "Reviews:",
            "Average Rating:",
        ];
        let mut last = 0;
        for label in labels {
            let at = body[last..]
                .find(label)
                .unwrap_or_else(|| panic!("missing section {label}"));
            last += at + label.len();
        }
        assert!(body.contains("Travel Keyboard"));
        assert!(body.contains("- layout: 65 percent"));
        assert!(body.contains("(rating: 5/5)"));
        assert!(body.contains("Average Rating: 4.5"));
        assert!(!rendered.system_message.is_empty());
    }

    #[test]
    fn mos_prompt_marks_missing_reviews() {
        let ts = TemplateSet::default();
        let mut p = product("p1", "Travel Keyboard");
        p.reviews.clear();
        let rendered = ts.render_mos_generation(&p).unwrap();
        assert!(rendered.user_message.contains("(no reviews)"));
    }

    #[test]
    fn ces_prompt_mos_mode_embeds_summaries_and_query_once() {
        let ts = TemplateSet::default();
        let rendered = ts
            .render_ces_generation("best keyboard for travel", &ces_inputs(), CesMode::Mos)
            .unwrap();
        let body = &rendered.user_message;
        assert_eq!(body.matches("best keyboard for travel").count(), 1);
        for i in 1..=3 {
            assert!(body.contains(&format!("Opinion summary for product {i}.")));
            assert!(body.contains(&format!("Keyboard model {i}")));
        }
        assert!(body.contains("Final Verdict"));
        assert!(!body.contains("65 percent"), "mos mode must not embed raw specs");
    }

    #[test]
    fn ces_prompt_dia_mode_embeds_raw_data() {
        let ts = TemplateSet::default();
        let mut inputs = ces_inputs();
        for input in &mut inputs {
            input.opinion_summary = None;
        }
        let rendered = ts
            .render_ces_generation("best keyboard for travel", &inputs, CesMode::Dia)
            .unwrap();
        let body = &rendered.user_message;
        assert!(body.contains("- layout: 65 percent"));
        assert!(body.contains("Types great and fits in my bag."));
        assert!(!body.contains("Opinion summary for product"));
    }

    #[test]
    fn ces_prompt_mos_mode_requires_summaries() {
        let ts = TemplateSet::default();
        let mut inputs = ces_inputs();
        inputs[1].opinion_summary = None;
        let err = ts
            .render_ces_generation("best keyboard", &inputs, CesMode::Mos)
            .unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingOpinionSummary {
                product_id: "p2".to_string()
            }
        );
    }

    #[test]
    fn ces_prompt_rejects_wrong_product_count() {
        let ts = TemplateSet::default();
        let inputs = ces_inputs()[..2].to_vec();
        let err = ts
            .render_ces_generation("best keyboard", &inputs, CesMode::Mos)
            .unwrap_err();
        assert_eq!(err, PromptError::ProductCount { got: 2 });
    }

    #[test]
    fn eval_prompts_end_with_scoring_instruction() {
        let ts = TemplateSet::default();
        let ctx = EvalContext::for_comparison("best keyboard", &[product("p1", "Keyboard One")]);
        for dim in DimensionId::all() {
            let rendered = ts
                .render_evaluation(dim, "A plausible summary to score.", &ctx)
                .unwrap();
            assert!(
                rendered.user_message.trim_end().ends_with(SCORING_INSTRUCTION),
                "{dim} prompt must end with the scoring instruction"
            );
            assert!(rendered.user_message.contains(dim.criteria()));
        }
    }

    #[test]
    fn eval_prompt_context_routing() {
        let ts = TemplateSet::default();
        let p = product("p1", "Keyboard One");
        let ctx = EvalContext::for_comparison("best travel keyboard", &[p]);
        let summary = "Summary under evaluation.";

        // Surface dimensions: summary only.
        for dim in [
            DimensionId::Clarity,
            DimensionId::FormatAdherence,
            DimensionId::Fluency,
            DimensionId::Coherence,
            DimensionId::Specificity,
        ] {
            let r = ts.render_evaluation(dim, summary, &ctx).unwrap();
            assert!(!r.user_message.contains("65 percent"), "{dim} must not see sources");
            assert!(
                !r.user_message.contains("best travel keyboard"),
                "{dim} must not see the query"
            );
        }

        // Grounded dimensions: sources included.
        for dim in [
            DimensionId::Faithfulness,
            DimensionId::Informativeness,
            DimensionId::Relevance,
            DimensionId::MFaithfulness,
            DimensionId::AspectCoverage,
            DimensionId::SentimentConsistency,
        ] {
            let r = ts.render_evaluation(dim, summary, &ctx).unwrap();
            assert!(r.user_message.contains("65 percent"), "{dim} must see sources");
        }

        // Query-dependent dimensions: query included.
        for dim in [DimensionId::QueryRelevance, DimensionId::Faithfulness] {
            let r = ts.render_evaluation(dim, summary, &ctx).unwrap();
            assert!(
                r.user_message.contains("best travel keyboard"),
                "{dim} must see the query"
            );
        }
    }

    #[test]
    fn eval_prompt_rejects_empty_summary() {
        let ts = TemplateSet::default();
        let ctx = EvalContext::default();
        let err = ts
            .render_evaluation(DimensionId::Clarity, "  ", &ctx)
            .unwrap_err();
        assert_eq!(err, PromptError::EmptySummary);
    }

    #[test]
    fn distinct_products_yield_distinct_fingerprints() {
        let ts = TemplateSet::default();
        let a = ts.render_mos_generation(&product("p1", "Keyboard One")).unwrap();
        let b = ts.render_mos_generation(&product("p2", "Keyboard Two")).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.fingerprint());
    }

    #[test]
    fn dimension_ids_round_trip() {
        for dim in DimensionId::all() {
            assert_eq!(DimensionId::parse(dim.as_str()), Some(dim));
        }
        assert_eq!(DimensionId::parse("unknown"), None);
        assert_eq!(CES_DIMENSIONS.len() + MOS_DIMENSIONS.len(), 12);
    }

    #[test]
    fn criteria_carry_defining_phrases() {
        assert!(DimensionId::Clarity.criteria().contains("avoiding ambiguity"));
        assert!(DimensionId::Faithfulness
            .criteria()
            .contains("directly supported by the input data"));
        assert!(DimensionId::Informativeness
            .criteria()
            .contains("covers all relevant aspects and attributes"));
        assert!(DimensionId::FormatAdherence
            .criteria()
            .contains("follows the prescribed format"));
        assert!(DimensionId::QueryRelevance
            .criteria()
            .contains("addresses the user's query"));
    }

    #[test]
    fn template_override_takes_effect() {
        let mut ts = TemplateSet::default();
        ts.set(PromptTemplate::parse(
            "eval_clarity",
            "Custom {{summary}} check. End your response with a final line of exactly: Score: <integer 1-5>",
        ));
        let r = ts
            .render_evaluation(DimensionId::Clarity, "text", &EvalContext::default())
            .unwrap();
        assert!(r.user_message.starts_with("Custom text check."));
        assert_eq!(r.system_message, "");
    }
}
