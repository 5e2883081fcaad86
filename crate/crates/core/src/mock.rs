//! Deterministic stand-in for a text-generation model.
//!
//! [`MockModel`] synthesizes a response purely from the request seed, the
//! prompt fingerprint, and the sample index, so a pipeline run with a fixed
//! seed produces byte-identical outputs on every machine. The synthesized
//! text is shaped to what the prompt asks for:
//!
//! * evaluation prompts get a short assessment ending in a `Score:` line,
//! * comparison prompts get a pipe table plus a final verdict that passes
//!   the format checks,
//! * opinion-summary prompts get a plausible review-style paragraph.
//!
//! Tests can also pin exact responses per prompt fingerprint via
//! [`MockModel::with_canned`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::prompt::SCORING_INSTRUCTION;

/// Content hash identifying a prompt pair. Any textual difference in either
/// message yields a different fingerprint.
pub fn fingerprint(system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system.as_bytes());
    hasher.update([0x1f]);
    hasher.update(user.as_bytes());
    hex_digest(&hasher.finalize())
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Deterministic response generator.
#[derive(Debug, Clone)]
pub struct MockModel {
    seed: u64,
    canned: BTreeMap<String, Vec<String>>,
}

const DYNAMIC_ATTRIBUTES: [&str; 8] = [
    "Build Quality",
    "Battery Life",
    "Ease Of Use",
    "Durability",
    "Noise Level",
    "Warranty Coverage",
    "Portability",
    "Connectivity",
];

const QUALITY_WORDS: [&str; 5] = ["excellent", "good", "solid", "average", "adequate"];

const PROS: [&str; 5] = [
    "solid performance",
    "good value",
    "well reviewed",
    "easy setup",
    "sturdy construction",
];

const CONS: [&str; 5] = [
    "limited options",
    "bulky design",
    "short warranty",
    "average battery",
    "basic accessories",
];

const MOS_ASPECTS: [&str; 6] = [
    "build quality",
    "ease of use",
    "battery life",
    "overall value",
    "reliability",
    "design",
];

const MOS_FLAWS: [&str; 4] = [
    "the packaging",
    "the setup instructions",
    "the bundled accessories",
    "the delivery experience",
];

const EVAL_REMARKS: [&str; 4] = [
    "The summary presents its points in an orderly way and stays grounded in the supplied material.",
    "Most claims trace back to the inputs, though the phrasing could be tighter in places.",
    "Coverage is broad and the structure is easy to follow from start to finish.",
    "The response is serviceable overall but leaves some room for improvement.",
];

impl MockModel {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            canned: BTreeMap::new(),
        }
    }

    /// Pins the responses returned for one prompt fingerprint. Samples cycle
    /// through `responses` by index.
    pub fn with_canned(mut self, fingerprint: impl Into<String>, responses: Vec<String>) -> Self {
        self.canned.insert(fingerprint.into(), responses);
        self
    }

    /// Synthesizes the response for sample `index` of a prompt.
    ///
    /// With `temperature <= 0` every sample returns the same text.
    pub fn respond(&self, system: &str, user: &str, index: u32, temperature: f64) -> String {
        let fp = fingerprint(system, user);
        if let Some(responses) = self.canned.get(&fp) {
            if !responses.is_empty() {
                return responses[index as usize % responses.len()].clone();
            }
        }
        let effective_index = if temperature <= 0.0 { 0 } else { index };
        let mut rng = self.rng_for(&fp, effective_index);
        if user.trim_end().ends_with(SCORING_INSTRUCTION) {
            evaluation_response(&mut rng)
        } else if user.contains("Final Verdict") {
            comparison_response(user, &mut rng)
        } else if user.contains("write the opinion summary") {
            opinion_summary_response(user, &mut rng)
        } else {
            format!(
                "Acknowledged. Nothing in the request called for a table, a summary, or a score \
                 (variant {}).",
                rng.random_range(0..1000u32)
            )
        }
    }

    fn rng_for(&self, fingerprint_hex: &str, index: u32) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(fingerprint_hex.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

/// A short assessment ending in a score line. Roughly 2% of samples are
/// deliberately malformed so downstream code sees invalid outputs too.
fn evaluation_response(rng: &mut ChaCha8Rng) -> String {
    if rng.random_range(0..100u32) < 2 {
        return "Unable to assess this response against the stated criteria.".to_string();
    }
    let remark = pick(rng, &EVAL_REMARKS);
    // Weights lean toward the upper end of the scale, mirroring how strong
    // systems are typically rated.
    let weights: [u32; 5] = [2, 3, 10, 35, 50];
    let total: u32 = weights.iter().sum();
    let mut roll = rng.random_range(0..total);
    let mut score = 5;
    for (i, w) in weights.iter().enumerate() {
        if roll < *w {
            score = i + 1;
            break;
        }
        roll -= w;
    }
    format!("{remark}\nScore: {score}")
}

/// Metadata scraped from a comparison prompt.
struct PromptProduct {
    title: String,
    base_price: String,
    final_price: String,
    rating: String,
}

/// Reads the `Product N:` metadata blocks and the query back out of the
/// prompt text.
fn parse_comparison_prompt(user: &str) -> (String, Vec<PromptProduct>) {
    let mut query = String::new();
    let mut products: Vec<PromptProduct> = Vec::new();
    for line in user.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("User query:") {
            query = rest.trim().to_string();
        } else if let Some(rest) = line.strip_prefix("Product ") {
            // Matches "Product <n>: <title>" but not e.g. "Product data:".
            if let Some((n, title)) = rest.split_once(':') {
                if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() {
                    products.push(PromptProduct {
                        title: title.trim().to_string(),
                        base_price: String::new(),
                        final_price: String::new(),
                        rating: String::new(),
                    });
                }
            }
        } else if let Some(current) = products.last_mut() {
            if let Some(rest) = line.strip_prefix("Base Price:") {
                if current.base_price.is_empty() {
                    current.base_price = rest.trim().to_string();
                }
            } else if let Some(rest) = line.strip_prefix("Final Price:") {
                if current.final_price.is_empty() {
                    current.final_price = rest.trim().to_string();
                }
            } else if let Some(rest) = line.strip_prefix("Average Rating:") {
                if current.rating.is_empty() {
                    current.rating = rest.trim().to_string();
                }
            }
        }
    }
    (query, products)
}

/// A pipe table over the three products plus a final verdict, constructed to
/// satisfy every format check.
fn comparison_response(user: &str, rng: &mut ChaCha8Rng) -> String {
    let (query, mut products) = parse_comparison_prompt(user);
    while products.len() < 3 {
        let n = products.len() + 1;
        products.push(PromptProduct {
            title: format!("Unnamed product {n}"),
            base_price: "NA".to_string(),
            final_price: "NA".to_string(),
            rating: "NA".to_string(),
        });
    }
    products.truncate(3);
    for p in &mut products {
        for field in [&mut p.base_price, &mut p.final_price, &mut p.rating] {
            if field.is_empty() {
                *field = "NA".to_string();
            }
        }
    }

    // Two distinct dynamically named attribute rows, one cell marked NA.
    let first = rng.random_range(0..DYNAMIC_ATTRIBUTES.len());
    let second = (first + 1 + rng.random_range(0..DYNAMIC_ATTRIBUTES.len() - 1))
        % DYNAMIC_ATTRIBUTES.len();
    let na_row = rng.random_range(0..2u32);
    let na_col = rng.random_range(0..3usize);

    let mut out = String::new();
    out.push_str(&format!(
        "| Attribute | {} | {} | {} |\n",
        products[0].title, products[1].title, products[2].title
    ));
    out.push_str("| --- | --- | --- | --- |\n");
    out.push_str(&format!(
        "| Base Price | {} | {} | {} |\n",
        products[0].base_price, products[1].base_price, products[2].base_price
    ));
    out.push_str(&format!(
        "| Final Price | {} | {} | {} |\n",
        products[0].final_price, products[1].final_price, products[2].final_price
    ));
    out.push_str(&format!(
        "| Average Rating | {} | {} | {} |\n",
        products[0].rating, products[1].rating, products[2].rating
    ));
    for (row_idx, attr) in [DYNAMIC_ATTRIBUTES[first], DYNAMIC_ATTRIBUTES[second]]
        .iter()
        .enumerate()
    {
        let mut cells: [String; 3] = [
            pick(rng, &QUALITY_WORDS).to_string(),
            pick(rng, &QUALITY_WORDS).to_string(),
            pick(rng, &QUALITY_WORDS).to_string(),
        ];
        if row_idx as u32 == na_row {
            cells[na_col] = "NA".to_string();
        }
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            attr, cells[0], cells[1], cells[2]
        ));
    }
    out.push_str(&format!(
        "| Pros | {} | {} | {} |\n",
        pick(rng, &PROS),
        pick(rng, &PROS),
        pick(rng, &PROS)
    ));
    out.push_str(&format!(
        "| Cons | {} | {} | {} |\n",
        pick(rng, &CONS),
        pick(rng, &CONS),
        pick(rng, &CONS)
    ));

    let winner = &products[rng.random_range(0..3usize)].title;
    let query_text = if query.is_empty() {
        "this need".to_string()
    } else {
        format!("\"{query}\"")
    };
    out.push_str(&format!(
        "\nFinal Verdict: For {query_text}, {winner} is the strongest choice overall: it \
         balances price, customer satisfaction, and everyday usability better than both \
         alternatives, making it the safest pick for most buyers.\n"
    ));
    out
}

/// A review-style paragraph for one product, echoing its title.
fn opinion_summary_response(user: &str, rng: &mut ChaCha8Rng) -> String {
    let title = user
        .lines()
        .find_map(|l| l.trim().strip_prefix("Title:"))
        .map(|t| t.trim().to_string())
        .unwrap_or_else(|| "this product".to_string());
    let a1 = pick(rng, &MOS_ASPECTS);
    let mut a2 = pick(rng, &MOS_ASPECTS);
    while a2 == a1 {
        a2 = pick(rng, &MOS_ASPECTS);
    }
    let flaw = pick(rng, &MOS_FLAWS);
    format!(
        "The {title} draws largely positive feedback from buyers. Reviewers repeatedly praise \
         its {a1} and {a2}, while a smaller number take issue with {flaw}. The overall tone of \
         the reviews matches the listed average rating, and most owners indicate they would \
         buy it again."
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Price, ProductRecord, Review, SpecEntry};
    use crate::prompt::{CesMode, CesProductInput, DimensionId, EvalContext, TemplateSet};

    fn product(i: usize) -> ProductRecord {
        ProductRecord {
            product_id: format!("p{i}"),
            title: format!("Gadget {i}"),
            description: "A small useful gadget.".to_string(),
            key_features: alloc::vec![format!("feature {i}")],
            specifications: alloc::vec![SpecEntry::new("weight", "200 g")],
            reviews: alloc::vec![Review::new("Works well.", Some(4))],
            average_rating: 4.0,
            base_price: Price::new("19.99", "USD"),
            final_price: Price::new("17.99", "USD"),
        }
    }

    #[test]
    fn identical_requests_are_deterministic() {
        let a = MockModel::new(7).respond("sys", "user text", 3, 0.7);
        let b = MockModel::new(7).respond("sys", "user text", 3, 0.7);
        assert_eq!(a, b);
    }

    #[test]
    fn seed_and_index_change_the_output() {
        let base = MockModel::new(7).respond("sys", "score user", 0, 0.7);
        assert_ne!(base, MockModel::new(8).respond("sys", "score user", 0, 0.7));
        // Index matters only at nonzero temperature.
        let t0_a = MockModel::new(7).respond("sys", "score user", 0, 0.0);
        let t0_b = MockModel::new(7).respond("sys", "score user", 9, 0.0);
        assert_eq!(t0_a, t0_b);
    }

    #[test]
    fn canned_responses_cycle_by_index() {
        let fp = fingerprint("s", "u");
        let model = MockModel::new(1)
            .with_canned(fp, alloc::vec!["one".to_string(), "two".to_string()]);
        assert_eq!(model.respond("s", "u", 0, 0.2), "one");
        assert_eq!(model.respond("s", "u", 1, 0.2), "two");
        assert_eq!(model.respond("s", "u", 2, 0.2), "one");
    }

    #[test]
    fn evaluation_prompts_get_score_lines() {
        let ts = TemplateSet::default();
        let ctx = EvalContext::for_product(&product(1));
        let rendered = ts
            .render_evaluation(DimensionId::Fluency, "A fine summary.", &ctx)
            .unwrap();
        let model = MockModel::new(11);
        let mut scored = 0;
        for i in 0..50 {
            let text = model.respond(&rendered.system_message, &rendered.user_message, i, 0.2);
            if text.contains("Score:") {
                scored += 1;
            }
        }
        assert!(scored >= 45, "expected mostly valid score lines, got {scored}");
    }

    #[test]
    fn comparison_prompts_get_tables_with_verdicts() {
        let ts = TemplateSet::default();
        let inputs: Vec<CesProductInput> = (1..=3)
            .map(|i| CesProductInput {
                product: product(i),
                opinion_summary: Some(format!("Summary of gadget {i}.")),
            })
            .collect();
        let rendered = ts
            .render_ces_generation("best gadget under 20", &inputs, CesMode::Mos)
            .unwrap();
        let text = MockModel::new(3).respond(&rendered.system_message, &rendered.user_message, 0, 0.2);
        assert!(text.contains("| Base Price |"));
        assert!(text.contains("| Cons |"));
        assert!(text.contains("Gadget 1"));
        assert!(text.contains("Final Verdict:"));
        assert!(text.contains("best gadget under 20"));
        assert!(text.contains("NA"));
    }

    #[test]
    fn opinion_prompts_get_paragraphs() {
        let ts = TemplateSet::default();
        let rendered = ts.render_mos_generation(&product(2)).unwrap();
        let text = MockModel::new(3).respond(&rendered.system_message, &rendered.user_message, 0, 0.2);
        assert!(text.contains("Gadget 2"));
        assert!(!text.contains('|'));
        assert!(!text.contains("Score:"));
    }

    #[test]
    fn fingerprint_separates_system_from_user() {
        assert_ne!(fingerprint("ab", "c"), fingerprint("a", "bc"));
        assert_eq!(fingerprint("x", "y"), fingerprint("x", "y"));
    }
}
