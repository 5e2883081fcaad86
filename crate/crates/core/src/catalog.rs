//! Query-to-product data model, validation, and dataset statistics.
//!
//! A dataset is a list of [`QueryInstance`]s, each binding one user query
//! to exactly three recommended products carrying multi-source metadata:
//! title, description, key features, specifications, reviews with optional
//! ratings, an average rating, and base/final prices.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text::{normalize_spaces, word_count};

/// Number of recommended products per query.
pub const PRODUCTS_PER_QUERY: usize = 3;

/// A money amount kept as a decimal string plus an ISO-4217 currency code.
///
/// No float arithmetic is ever performed on prices; they are carried
/// through prompts and tables verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Price {
    pub amount: String,
    pub currency: String,
}

impl Price {
    pub fn new(amount: impl Into<String>, currency: impl Into<String>) -> Self {
        Self {
            amount: amount.into(),
            currency: currency.into(),
        }
    }

    fn validate(&self, field: &str) -> Result<(), InvariantViolation> {
        if !is_nonnegative_decimal(&self.amount) {
            return Err(InvariantViolation::BadPriceAmount {
                field: field.to_string(),
                amount: self.amount.clone(),
            });
        }
        let ok = self.currency.len() == 3 && self.currency.bytes().all(|b| b.is_ascii_uppercase());
        if !ok {
            return Err(InvariantViolation::BadCurrency {
                field: field.to_string(),
                currency: self.currency.clone(),
            });
        }
        Ok(())
    }
}

/// Unsigned decimal: digits with at most one point, at least one digit.
fn is_nonnegative_decimal(s: &str) -> bool {
    let mut digits = 0usize;
    let mut points = 0usize;
    for b in s.bytes() {
        match b {
            b'0'..=b'9' => digits += 1,
            b'.' => points += 1,
            _ => return false,
        }
    }
    digits >= 1 && points <= 1
}

/// One named specification entry; order within a product is meaningful.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecEntry {
    pub name: String,
    pub value: String,
}

impl SpecEntry {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

/// A customer review; ratings are optional and 1..=5 when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
}

impl Review {
    pub fn new(text: impl Into<String>, rating: Option<u8>) -> Self {
        Self {
            text: text.into(),
            rating,
        }
    }
}

/// A single recommended product with all of its source metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub product_id: String,
    pub title: String,
    pub description: String,
    pub key_features: Vec<String>,
    pub specifications: Vec<SpecEntry>,
    pub reviews: Vec<Review>,
    pub average_rating: f64,
    pub base_price: Price,
    pub final_price: Price,
}

impl ProductRecord {
    /// Checks every per-product invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        if self.title.trim().is_empty() {
            return Err(InvariantViolation::EmptyTitle {
                product_id: self.product_id.clone(),
            });
        }
        if !(1.0..=5.0).contains(&self.average_rating) {
            return Err(InvariantViolation::AverageRatingOutOfRange {
                product_id: self.product_id.clone(),
                value: self.average_rating,
            });
        }
        for (i, review) in self.reviews.iter().enumerate() {
            if let Some(r) = review.rating {
                if !(1..=5).contains(&r) {
                    return Err(InvariantViolation::ReviewRatingOutOfRange {
                        product_id: self.product_id.clone(),
                        review_index: i,
                        value: r,
                    });
                }
            }
        }
        self.base_price.validate("base_price")?;
        self.final_price.validate("final_price")?;
        if self.base_price.currency != self.final_price.currency {
            return Err(InvariantViolation::CurrencyMismatch {
                product_id: self.product_id.clone(),
                base: self.base_price.currency.clone(),
                final_: self.final_price.currency.clone(),
            });
        }
        Ok(())
    }

    /// All specification pairs as `name value` joined by single spaces.
    pub fn specifications_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.specifications {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&normalize_spaces(&entry.name));
            out.push(' ');
            out.push_str(&normalize_spaces(&entry.value));
        }
        out
    }

    /// All key features joined by single spaces.
    pub fn key_features_text(&self) -> String {
        let mut out = String::new();
        for feature in &self.key_features {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&normalize_spaces(feature));
        }
        out
    }
}

/// A user query with its top-3 recommended products in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub query_id: String,
    pub query: String,
    pub products: Vec<ProductRecord>,
}

impl QueryInstance {
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        if self.query.trim().is_empty() {
            return Err(InvariantViolation::EmptyQuery {
                query_id: self.query_id.clone(),
            });
        }
        if self.products.len() != PRODUCTS_PER_QUERY {
            return Err(InvariantViolation::ProductCount {
                query_id: self.query_id.clone(),
                got: self.products.len(),
            });
        }
        for product in &self.products {
            product.validate()?;
        }
        Ok(())
    }
}

/// A validated collection of query instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<QueryInstance>,
}

impl Dataset {
    pub fn new(instances: Vec<QueryInstance>) -> Self {
        Self { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn total_products(&self) -> usize {
        self.instances.iter().map(|q| q.products.len()).sum()
    }

    pub fn find(&self, query_id: &str) -> Option<&QueryInstance> {
        self.instances.iter().find(|q| q.query_id == query_id)
    }
}

/// The seven dataset statistics rows.
///
/// Word counts follow the whitespace rule in [`crate::text`]. Description,
/// specification, and key-feature averages are arithmetic means over all
/// products; the review-length average is the mean over individual reviews
/// (the length of a typical review, not of a product's combined review
/// text).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_unique_queries: usize,
    pub n_total_products: usize,
    pub avg_reviews_per_product: f64,
    pub avg_spec_words: f64,
    pub avg_review_words: f64,
    pub avg_description_words: f64,
    pub avg_key_feature_words: f64,
}

/// Computes all seven statistics in one pass.
pub fn compute_stats(dataset: &Dataset) -> Result<DatasetStats, StatsError> {
    if dataset.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    let mut n_products = 0usize;
    let mut n_reviews = 0usize;
    let mut spec_words = 0usize;
    let mut review_words = 0usize;
    let mut description_words = 0usize;
    let mut feature_words = 0usize;

    for instance in &dataset.instances {
        for product in &instance.products {
            n_products += 1;
            n_reviews += product.reviews.len();
            spec_words += word_count(&product.specifications_text());
            description_words += word_count(&product.description);
            feature_words += word_count(&product.key_features_text());
            for review in &product.reviews {
                review_words += word_count(&review.text);
            }
        }
    }

    let per_product = |total: usize| total as f64 / n_products as f64;
    let avg_review_words = if n_reviews == 0 {
        0.0
    } else {
        review_words as f64 / n_reviews as f64
    };

    Ok(DatasetStats {
        n_unique_queries: dataset.len(),
        n_total_products: n_products,
        avg_reviews_per_product: per_product(n_reviews),
        avg_spec_words: per_product(spec_words),
        avg_review_words,
        avg_description_words: per_product(description_words),
        avg_key_feature_words: per_product(feature_words),
    })
}

/// A violation of one of the data-model invariants.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvariantViolation {
    #[error("query {query_id}: product count != 3 (got {got})")]
    ProductCount { query_id: String, got: usize },
    #[error("query {query_id}: query text is empty")]
    EmptyQuery { query_id: String },
    #[error("product {product_id}: title is empty")]
    EmptyTitle { product_id: String },
    #[error("product {product_id}: average_rating {value} outside [1,5]")]
    AverageRatingOutOfRange { product_id: String, value: f64 },
    #[error("product {product_id}: review {review_index} rating {value} outside 1..=5")]
    ReviewRatingOutOfRange {
        product_id: String,
        review_index: usize,
        value: u8,
    },
    #[error("{field}: amount {amount:?} is not a non-negative decimal")]
    BadPriceAmount { field: String, amount: String },
    #[error("{field}: currency {currency:?} is not an ISO-4217 code")]
    BadCurrency { field: String, currency: String },
    #[error("product {product_id}: base/final currency mismatch ({base} vs {final_})")]
    CurrencyMismatch {
        product_id: String,
        base: String,
        final_: String,
    },
    #[error("duplicate query_id {query_id}")]
    DuplicateQueryId { query_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("cannot compute statistics of an empty dataset")]
    EmptyDataset,
}
