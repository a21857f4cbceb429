use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatBackend, CompletionRequest, GatewayError, ModelConfig};

/// What the stub does on its next call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubStep {
    Reply(String),
    /// Retryable transport failure.
    Transient,
    Timeout,
    Refuse,
}

impl StubStep {
    pub fn reply(text: impl Into<String>) -> Self {
        StubStep::Reply(text.into())
    }

    fn into_result(self) -> Result<String, GatewayError> {
        match self {
            StubStep::Reply(text) => Ok(text),
            StubStep::Transient => Err(GatewayError::Transport("scripted transient failure".into())),
            StubStep::Timeout => Err(GatewayError::Timeout),
            StubStep::Refuse => Err(GatewayError::ProviderRefusal("scripted refusal".into())),
        }
    }
}

pub type RecordedRequest = CompletionRequest;

/// Deterministic backend that replays a script regardless of input and
/// records every request it receives.
#[derive(Debug, Default)]
pub struct ScriptedStub {
    script: Mutex<VecDeque<StubStep>>,
    log: Mutex<Vec<RecordedRequest>>,
}

impl ScriptedStub {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::from_steps(replies.into_iter().map(StubStep::reply))
    }

    pub fn from_steps(steps: impl IntoIterator<Item = StubStep>) -> Self {
        Self { script: Mutex::new(steps.into_iter().collect()), log: Mutex::default() }
    }

    pub fn push(&self, step: StubStep) {
        self.script.lock().unwrap().push_back(step);
    }

    pub fn push_reply(&self, text: impl Into<String>) {
        self.push(StubStep::reply(text));
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedStub {
    fn attempt(&self, _config: &ModelConfig, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.log.lock().unwrap().push(request.clone());
        match self.script.lock().unwrap().pop_front() {
            Some(step) => step.into_result(),
            None => Err(GatewayError::ProviderRefusal("script exhausted".into())),
        }
    }
}

type Responder = dyn Fn(&CompletionRequest) -> StubStep + Send + Sync;

/// Backend that computes each step from the request, recording calls like
/// [`ScriptedStub`].
pub struct FnStub {
    respond: Box<Responder>,
    log: Mutex<Vec<RecordedRequest>>,
}

impl FnStub {
    pub fn new(respond: impl Fn(&CompletionRequest) -> StubStep + Send + Sync + 'static) -> Self {
        Self { respond: Box::new(respond), log: Mutex::default() }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl ChatBackend for FnStub {
    fn attempt(&self, _config: &ModelConfig, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.log.lock().unwrap().push(request.clone());
        (self.respond)(request).into_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replies_in_order_and_logs_calls() {
        let stub = ScriptedStub::new(["a", "b"]);
        let req = CompletionRequest { system: "s".into(), history: vec![] };
        let cfg = ModelConfig::default();
        assert_eq!(stub.attempt(&cfg, &req).unwrap(), "a");
        assert_eq!(stub.attempt(&cfg, &req).unwrap(), "b");
        assert_eq!(stub.requests().len(), 2);
        assert_eq!(stub.remaining(), 0);
    }
}
