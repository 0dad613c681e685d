//! Request and response bodies, and the error shape shared by every endpoint.

use std::collections::{BTreeMap, BTreeSet};

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, NaiveDate, Utc};
use plateopt::domain::{IssueKey, IssueMeta, PosId};
use plateopt::optimizer::{PlanSet, OPTIMAL_DISTRIBUTION, OPTIMAL_SUPPLY};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

pub const MANUAL: &str = "manual";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// `{"errors": [{"field", "message"}]}` with a status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub errors: Vec<FieldError>,
}

impl ApiError {
    pub fn new(status: StatusCode, field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            errors: vec![FieldError {
                field: field.into(),
                message: message.into(),
            }],
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "path", what)
    }

    pub fn invalid(errors: Vec<FieldError>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            errors,
        }
    }
}

impl From<plateopt::Error> for ApiError {
    fn from(e: plateopt::Error) -> Self {
        match e {
            plateopt::Error::Invalid { field, message } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, field, message)
            }
            plateopt::Error::Reference(m) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "references", m),
            e if e.is_validation() => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "body", e.to_string()),
            e => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "server", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "errors": self.errors }))).into_response()
    }
}

/// A planner's choice for an issue, with any per-POS edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub issue: IssueKey,
    pub label: String,
    pub adjustments: Vec<Adjustment>,
    pub actor: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adjustment {
    pub pos: PosId,
    pub supply: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRequest {
    pub label: String,
    #[serde(default)]
    pub adjustments: Vec<AdjustmentRequest>,
    pub actor: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustmentRequest {
    pub pos: String,
    pub supply: i64,
    pub reason: String,
}

impl SelectionRequest {
    /// Checks the body against the issue's plate and returns the selection.
    pub fn validate(self, issue: &IssueKey, plate: &BTreeSet<PosId>, now: DateTime<Utc>) -> Result<Selection, ApiError> {
        let mut errors = Vec::new();
        let mut push = |field: String, message: &str| {
            errors.push(FieldError {
                field,
                message: message.to_string(),
            })
        };
        if ![OPTIMAL_SUPPLY, OPTIMAL_DISTRIBUTION, MANUAL].contains(&self.label.as_str()) {
            push("label".into(), "must be optimal_supply, optimal_distribution or manual");
        }
        if self.actor.trim().is_empty() {
            push("actor".into(), "must be non-empty");
        }
        let mut seen = BTreeSet::new();
        let mut adjustments = Vec::with_capacity(self.adjustments.len());
        for (i, a) in self.adjustments.iter().enumerate() {
            let pos = PosId::new(a.pos.clone());
            if !plate.contains(&pos) {
                push(format!("adjustments[{i}].pos"), "not on the plate of this issue");
            } else if !seen.insert(pos.clone()) {
                push(format!("adjustments[{i}].pos"), "adjusted more than once");
            }
            if a.supply < 0 {
                push(format!("adjustments[{i}].supply"), "must be >= 0");
            } else if a.supply > u32::MAX as i64 {
                push(format!("adjustments[{i}].supply"), "too large");
            }
            if a.reason.trim().is_empty() {
                push(format!("adjustments[{i}].reason"), "a reason is required");
            }
            adjustments.push(Adjustment {
                pos,
                supply: a.supply.clamp(0, u32::MAX as i64) as u32,
                reason: a.reason.clone(),
            });
        }
        if !errors.is_empty() {
            return Err(ApiError::invalid(errors));
        }
        Ok(Selection {
            issue: issue.clone(),
            label: self.label,
            adjustments,
            actor: self.actor,
            timestamp: self.timestamp.unwrap_or(now),
        })
    }
}

/// Editable issue metadata; absent fields keep their value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaUpdate {
    pub price: Option<Decimal>,
    #[serde(default, with = "double_option")]
    pub extra_product_id: Option<Option<String>>,
    pub references: Option<Vec<IssueKey>>,
    pub atypical_exclusions: Option<BTreeSet<IssueKey>>,
    pub n_total: Option<u32>,
    pub delta: Option<u32>,
}

impl MetaUpdate {
    pub fn apply(self, mut meta: IssueMeta) -> IssueMeta {
        if let Some(p) = self.price {
            meta.price = p;
        }
        if let Some(x) = self.extra_product_id {
            meta.extra_product_id = x;
        }
        if let Some(r) = self.references {
            meta.references = r;
        }
        if let Some(x) = self.atypical_exclusions {
            meta.atypical_exclusions = x;
        }
        if let Some(n) = self.n_total {
            meta.n_total = n;
        }
        if let Some(d) = self.delta {
            meta.delta = d;
        }
        meta
    }
}

/// Distinguishes an explicit `null` from an absent field.
mod double_option {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D, T>(d: D) -> Result<Option<Option<T>>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de>,
    {
        Option::<T>::deserialize(d).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    /// Identifies the run and the issue metadata the plans were computed from.
    pub manifest_hash: String,
    #[serde(flatten)]
    pub plans: PlanSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueSummary {
    pub issue: IssueKey,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub n_total: u32,
    pub delta: u32,
    pub plate_size: usize,
    /// `pending`, `planned` or `selected`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsPoint {
    pub issue: IssueKey,
    pub period_start: NaiveDate,
    pub supply: u64,
    pub sales: u64,
    pub sellthrough: f64,
    pub oos_count: u32,
    pub revenue: Decimal,
    pub profit: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueStats {
    pub issue: IssueKey,
    /// Earlier issues of the title that ended before this one starts, oldest first.
    pub history: Vec<StatsPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub issue: IssueKey,
    pub manifest_hash: String,
    pub totals: BTreeMap<String, u64>,
}
