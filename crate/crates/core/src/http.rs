//! JSON API for the web front end.
//!
//! Study calls block (the model client is synchronous), so every handler runs
//! them on the blocking pool. Errors come back as
//! `{"error": <code>, "message": <text>, "details": <object|null>}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chat::ChatMessage;
use crate::dataset::{build_dataset, to_csv_string, DatasetError};
use crate::gateway::GatewayError;
use crate::instruments::{instrument_schema, InstrumentError, InstrumentId, ScoredInstrument};
use crate::orchestrator::{Registration, Study, StudyError, UiSessionState};
use crate::report::{build_report, AnalysisReport, ReportError, ReportOptions};
use crate::session::{ScreeningAnswers, Wave};
use crate::store::StoreError;

#[derive(Clone)]
pub struct AppState {
    pub study: Arc<Study>,
    /// When set, every request needs `Authorization: Bearer <token>`.
    pub token: Option<String>,
    pub report: ReportOptions,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), details: Value::Null }
    }

    fn with(mut self, details: Value) -> Self {
        self.details = details;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.code, "message": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            StoreError::ConflictingPhase { .. } => ApiError::new(StatusCode::CONFLICT, "conflicting_phase", msg),
            StoreError::Duplicate(_) => ApiError::new(StatusCode::CONFLICT, "duplicate", msg),
            StoreError::Corrupt { .. } | StoreError::Io(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", msg)
            }
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let msg = e.to_string();
        match e {
            GatewayError::Timeout => ApiError::new(StatusCode::GATEWAY_TIMEOUT, "model_timeout", msg),
            GatewayError::ProviderRefusal(_) => ApiError::new(StatusCode::BAD_GATEWAY, "model_refusal", msg),
            _ => ApiError::new(StatusCode::BAD_GATEWAY, "model_unavailable", msg),
        }
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match e {
            StudyError::Store(e) => e.into(),
            StudyError::Gateway(e) => e.into(),
            StudyError::Prompt(_) => ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_prompt_input", msg),
            StudyError::Instrument(_) => ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_responses", msg),
            StudyError::IncompleteScreener(missing) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "incomplete_screener", msg).with(json!({ "missing": missing }))
            }
            StudyError::NotEligible(reasons) => {
                ApiError::new(S::CONFLICT, "not_eligible", msg).with(json!({ "reasons": reasons }))
            }
            StudyError::WrongPhase { actual } => {
                ApiError::new(S::CONFLICT, "wrong_phase", msg).with(json!({ "phase": actual }))
            }
            StudyError::MinimumNotMet { phase, have, need } => ApiError::new(S::CONFLICT, "minimum_not_met", msg)
                .with(json!({ "phase": phase, "have": have, "need": need })),
            StudyError::IncompleteSurvey(missing) => {
                ApiError::new(S::CONFLICT, "incomplete_survey", msg).with(json!({ "missing": missing }))
            }
            StudyError::NotAdministered(_) => ApiError::new(S::CONFLICT, "not_administered", msg),
            StudyError::SurveyAlreadySubmitted(_) => ApiError::new(S::CONFLICT, "survey_already_submitted", msg),
            StudyError::EmptyMessage => ApiError::new(S::UNPROCESSABLE_ENTITY, "empty_message", msg),
            StudyError::ReplyPending => ApiError::new(S::CONFLICT, "reply_pending", msg),
            StudyError::NoReplyPending => ApiError::new(S::CONFLICT, "no_reply_pending", msg),
            StudyError::BaselineHasNoFollowup => ApiError::new(S::CONFLICT, "baseline_has_no_followup", msg),
            StudyError::PrimaryNotComplete(_) => ApiError::new(S::CONFLICT, "primary_not_complete", msg),
        }
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        let msg = e.to_string();
        match e {
            DatasetError::NoCompletedSessions => ApiError::new(StatusCode::CONFLICT, "no_completed_sessions", msg),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "export_failed", msg),
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        let msg = e.to_string();
        match e {
            ReportError::InsufficientGroupSize { test, group } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "insufficient_group_size", msg)
                    .with(json!({ "test": test, "group": group }))
            }
            ReportError::Schema(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema", msg),
            ReportError::Stats { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "analysis_failed", msg),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, E>(f: impl FnOnce() -> Result<T, E> + Send + 'static) -> ApiResult<T>
where
    T: Send + 'static,
    E: Into<ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(Into::into)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub participant_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PostMessage {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageResponse {
    pub reply: ChatMessage,
    pub state: UiSessionState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitSurvey {
    pub responses: BTreeMap<String, i64>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SurveyResponseBody {
    pub scored: ScoredInstrument,
    pub state: UiSessionState,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct WaveFilter {
    pub wave: Option<Wave>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/participants/screen", post(screen))
        .route("/participants", post(register))
        .route("/participants/{id}/followup", post(followup))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/messages/retry", post(retry_message))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/survey/{instrument}", post(submit_survey))
        .route("/instruments", get(instruments))
        .route("/export.csv", get(export_csv))
        .route("/analysis/run", post(run_analysis))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn screen(State(s): State<AppState>, Json(answers): Json<ScreeningAnswers>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.study.screen(&answers)?))
}

async fn register(State(s): State<AppState>, Json(reg): Json<Registration>) -> ApiResult<impl IntoResponse> {
    let profile = blocking(move || s.study.register(&reg)).await?;
    Ok((StatusCode::CREATED, Json(profile)))
}

async fn create_session(State(s): State<AppState>, Json(body): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    let state = blocking(move || {
        let session = s.study.create_session(&body.participant_id)?;
        s.study.ui_state(&session.id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(state)))
}

async fn session_state(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<UiSessionState>> {
    Ok(Json(blocking(move || s.study.ui_state(&id)).await?))
}

async fn post_message(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<PostMessage>,
) -> ApiResult<Json<MessageResponse>> {
    let resp = blocking(move || {
        let reply = s.study.post_user_message(&id, &body.text)?;
        Ok::<_, StudyError>(MessageResponse { reply, state: s.study.ui_state(&id)? })
    })
    .await?;
    Ok(Json(resp))
}

async fn retry_message(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<MessageResponse>> {
    let resp = blocking(move || {
        let reply = s.study.retry_reply(&id)?;
        Ok::<_, StudyError>(MessageResponse { reply, state: s.study.ui_state(&id)? })
    })
    .await?;
    Ok(Json(resp))
}

async fn advance(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<UiSessionState>> {
    let state = blocking(move || {
        s.study.advance(&id)?;
        s.study.ui_state(&id)
    })
    .await?;
    Ok(Json(state))
}

async fn submit_survey(
    State(s): State<AppState>,
    Path((id, instrument)): Path<(String, String)>,
    Json(body): Json<SubmitSurvey>,
) -> ApiResult<Json<SurveyResponseBody>> {
    let instrument: InstrumentId = instrument
        .parse()
        .map_err(|e: InstrumentError| ApiError::new(StatusCode::NOT_FOUND, "unknown_instrument", e.to_string()))?;
    let resp = blocking(move || {
        let scored = s.study.submit_survey(&id, instrument, &body.responses, body.comment)?;
        Ok::<_, StudyError>(SurveyResponseBody { scored, state: s.study.ui_state(&id)? })
    })
    .await?;
    Ok(Json(resp))
}

async fn followup(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let state = blocking(move || {
        let session = s.study.start_followup(&id)?;
        s.study.ui_state(&session.id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(state)))
}

async fn instruments() -> impl IntoResponse {
    Json(instrument_schema())
}

async fn export_csv(State(s): State<AppState>, Query(filter): Query<WaveFilter>) -> ApiResult<impl IntoResponse> {
    let csv = blocking(move || {
        let rows = s.study.store().read(|st| build_dataset(st, filter.wave))?;
        to_csv_string(&rows)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn run_analysis(State(s): State<AppState>) -> ApiResult<Json<AnalysisReport>> {
    let report = blocking(move || {
        let rows = s.study.store().read(|st| build_dataset(st, None))?;
        Ok::<_, ApiError>(build_report(&rows, &s.report)?)
    })
    .await?;
    Ok(Json(report))
}
