//! Chat-completion access: an abstract `Backend`, an HTTP implementation
//! for OpenAI-compatible endpoints, a replay/recording transcript store,
//! and a caching, deduplicating `Client` that every detector goes through.
//!
//! With a replay-only client the whole pipeline is deterministic and
//! network-free; recording mode captures live traffic into the same store.

mod http;
mod store;
mod wire;

pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use store::TranscriptStore;
pub use wire::{ChatMessage, CompletionRequest, CompletionResponse, Role};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use thiserror::Error;

/// Errors from completion backends and the client.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// Network-level failure (connect, timeout, broken transfer). Retryable.
    #[error("transport error: {0}")]
    Transport(String),
    /// Non-success HTTP status after retries were exhausted or for
    /// non-retryable statuses.
    #[error("HTTP status {status}: {message}")]
    Http { status: u16, message: String },
    /// The endpoint answered but the body was not a usable completion.
    #[error("malformed completion response: {0}")]
    Parse(String),
    /// Replay-only client with no recorded entry for this request.
    #[error("no recorded completion for request digest {digest}")]
    ReplayMiss { digest: String },
    /// Transcript store I/O or format failure.
    #[error("transcript store error: {0}")]
    Store(String),
}

impl BackendError {
    /// Whether a retry could plausibly succeed.
    #[must_use]
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A synchronous chat-completion source.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

/// A `Backend` built from a closure; the standard test double.
pub struct FnBackend<F>(F);

impl<F> FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResponse, BackendError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self(f)
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResponse, BackendError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (self.0)(request)
    }
}

/// Cache counters since client construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheStats {
    /// Requests answered from the store (including de-duplicated waiters).
    pub hits: u64,
    /// Requests that went to the inner backend.
    pub misses: u64,
    /// Distinct digests currently stored.
    pub entries: usize,
}

/// Bounds concurrent inner-backend calls.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            permits: Mutex::new(limit.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("gate wait");
        }
        *permits -= 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

/// A single in-flight request other callers can wait on.
struct Flight {
    done: Mutex<Option<Result<CompletionResponse, BackendError>>>,
    cv: Condvar,
}

impl Flight {
    fn new() -> Self {
        Self {
            done: Mutex::new(None),
            cv: Condvar::new(),
        }
    }

    fn publish(&self, result: Result<CompletionResponse, BackendError>) {
        *self.done.lock().expect("flight lock") = Some(result);
        self.cv.notify_all();
    }

    fn wait(&self) -> Result<CompletionResponse, BackendError> {
        let mut done = self.done.lock().expect("flight lock");
        while done.is_none() {
            done = self.cv.wait(done).expect("flight wait");
        }
        done.clone().expect("flight result present")
    }
}

/// Caching, deduplicating completion client.
///
/// Every request is first served from the transcript store; misses go to
/// the inner backend (when present) under a concurrency gate, and two
/// concurrent identical requests share one inner call.
pub struct Client {
    inner: Option<Box<dyn Backend>>,
    store: TranscriptStore,
    hits: AtomicU64,
    misses: AtomicU64,
    flights: Mutex<HashMap<String, Arc<Flight>>>,
    gate: Gate,
}

impl Client {
    /// Live client with a volatile in-process cache.
    #[must_use]
    pub fn live(backend: Box<dyn Backend>, parallelism: usize) -> Self {
        Self::recording(backend, TranscriptStore::in_memory(), parallelism)
    }

    /// Live client persisting every completion into `store`.
    #[must_use]
    pub fn recording(backend: Box<dyn Backend>, store: TranscriptStore, parallelism: usize) -> Self {
        Self {
            inner: Some(backend),
            store,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            flights: Mutex::new(HashMap::new()),
            gate: Gate::new(parallelism),
        }
    }

    /// Replay-only client: unknown requests fail with `ReplayMiss`.
    #[must_use]
    pub fn replay(store: TranscriptStore) -> Self {
        Self {
            inner: None,
            store,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            flights: Mutex::new(HashMap::new()),
            gate: Gate::new(1),
        }
    }

    /// Completes a request, consulting cache → in-flight twin → inner
    /// backend, in that order.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let digest = request.digest();
        if let Some(hit) = self.store.get(&digest) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return self.check_shape(request, hit);
        }
        let Some(inner) = self.inner.as_ref() else {
            return Err(BackendError::ReplayMiss { digest });
        };

        let (flight, leader) = {
            let mut flights = self.flights.lock().expect("flights lock");
            match flights.get(&digest) {
                Some(f) => (Arc::clone(f), false),
                None => {
                    let f = Arc::new(Flight::new());
                    flights.insert(digest.clone(), Arc::clone(&f));
                    (f, true)
                }
            }
        };
        if !leader {
            // A twin request is already running; its result counts as a hit.
            let result = flight.wait();
            if result.is_ok() {
                self.hits.fetch_add(1, Ordering::Relaxed);
            }
            return result;
        }

        // Leader path. Re-check the store: a previous leader may have
        // finished between our miss and our flight registration.
        let result = match self.store.get(&digest) {
            Some(hit) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                self.check_shape(request, hit)
            }
            None => {
                let result = {
                    let _permit = self.gate.acquire();
                    inner.complete(request)
                };
                self.misses.fetch_add(1, Ordering::Relaxed);
                match result {
                    Ok(resp) => match self.check_shape(request, resp) {
                        Ok(resp) => self.store.put(request, &resp).map(|()| resp),
                        Err(e) => Err(e),
                    },
                    Err(e) => Err(e),
                }
            }
        };
        flight.publish(result.clone());
        self.flights.lock().expect("flights lock").remove(&digest);
        result
    }

    /// Enforces the response/request shape contract (`choices.len() == n`).
    fn check_shape(
        &self,
        request: &CompletionRequest,
        response: CompletionResponse,
    ) -> Result<CompletionResponse, BackendError> {
        if response.choices.len() != request.n as usize {
            return Err(BackendError::Parse(format!(
                "{} choices returned for n={}",
                response.choices.len(),
                request.n
            )));
        }
        if let Some(probs) = &response.first_token_probs {
            if probs.len() != response.choices.len() {
                return Err(BackendError::Parse(format!(
                    "{} token probabilities for {} choices",
                    probs.len(),
                    response.choices.len()
                )));
            }
        }
        Ok(response)
    }

    /// Cache counters and current entry count.
    #[must_use]
    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.store.len(),
        }
    }

    /// Clears the cache (and truncates a file-backed store); the hit/miss
    /// counters keep counting.
    pub fn purge(&self) -> Result<(), BackendError> {
        self.store.purge()
    }

    /// The underlying transcript store.
    #[must_use]
    pub fn store(&self) -> &TranscriptStore {
        &self.store
    }

    /// True when a miss can be served by an inner backend.
    #[must_use]
    pub fn is_live(&self) -> bool {
        self.inner.is_some()
    }
}

/// Shared per-run settings threaded through the detectors.
pub struct RunContext<'a> {
    pub client: &'a Client,
    /// Model identifier sent with every request.
    pub model: String,
    /// When set, overrides the seed of templates that define one;
    /// seedless templates stay seedless.
    pub seed: Option<i64>,
    /// Concurrency for per-sentence fan-out.
    pub parallelism: usize,
}

impl<'a> RunContext<'a> {
    #[must_use]
    pub fn new(client: &'a Client, model: impl Into<String>) -> Self {
        Self {
            client,
            model: model.into(),
            seed: None,
            parallelism: 1,
        }
    }

    #[must_use]
    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    #[must_use]
    pub fn with_seed(mut self, seed: Option<i64>) -> Self {
        self.seed = seed;
        self
    }
}
