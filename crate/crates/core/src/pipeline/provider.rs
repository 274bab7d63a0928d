use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CompletionError {
    #[error("completion transport failure: {0}")]
    Transport(String),
    #[error("completion request timed out")]
    Timeout,
    #[error("completion endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("no recorded completion for prompt {key}")]
    ReplayMiss { key: String },
    #[error("prompt {key} has {available} recorded completions, {requested} requested")]
    ReplayShort { key: String, available: usize, requested: usize },
    #[error("replay file {path}: {message}")]
    ReplayFile { path: PathBuf, message: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
}

/// Samples `n` completions for a prompt.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, CompletionError>;
}

/// Replay key of a prompt: lowercase hex SHA-256 of its UTF-8 bytes.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

type Recordings = BTreeMap<String, Vec<String>>;

fn read_recordings(path: &Path) -> Result<Recordings, CompletionError> {
    let bad = |message: String| CompletionError::ReplayFile {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

/// Serves completions recorded in a JSON object mapping prompt keys to
/// completion lists. The first `n` entries answer a request for `n`.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    recordings: Recordings,
    calls: AtomicUsize,
}

impl ReplayProvider {
    pub fn from_file(path: &Path) -> Result<Self, CompletionError> {
        Ok(Self::from_map(read_recordings(path)?))
    }

    pub fn from_map(recordings: BTreeMap<String, Vec<String>>) -> Self {
        ReplayProvider {
            recordings,
            calls: AtomicUsize::new(0),
        }
    }

    /// Records `completions` as the answer to `prompt`.
    pub fn insert(&mut self, prompt: &str, completions: Vec<String>) {
        self.recordings.insert(prompt_key(prompt), completions);
    }

    /// Requests served so far, including misses.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionProvider for ReplayProvider {
    fn complete(&self, prompt: &str, _temperature: f64, n: usize) -> Result<Vec<String>, CompletionError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = prompt_key(prompt);
        let recorded = self
            .recordings
            .get(&key)
            .ok_or_else(|| CompletionError::ReplayMiss { key: key.clone() })?;
        if recorded.len() < n {
            return Err(CompletionError::ReplayShort {
                key,
                available: recorded.len(),
                requested: n,
            });
        }
        Ok(recorded[..n].to_vec())
    }
}

/// Forwards to another provider and captures every response in the replay
/// format. Call [`save`](Self::save) to write the file.
pub struct RecordingProvider<P> {
    inner: P,
    path: PathBuf,
    recorded: Mutex<Recordings>,
}

impl<P: CompletionProvider> RecordingProvider<P> {
    /// Starts from the recordings already in `path`, if it exists.
    pub fn new(inner: P, path: &Path) -> Result<Self, CompletionError> {
        let recorded = if path.exists() { read_recordings(path)? } else { Recordings::new() };
        Ok(RecordingProvider {
            inner,
            path: path.to_path_buf(),
            recorded: Mutex::new(recorded),
        })
    }

    pub fn save(&self) -> Result<(), CompletionError> {
        let recorded = self.recorded.lock().unwrap();
        let text = serde_json::to_string_pretty(&*recorded).expect("string maps serialize");
        fs::write(&self.path, text + "\n").map_err(|e| CompletionError::ReplayFile {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, CompletionError> {
        let out = self.inner.complete(prompt, temperature, n)?;
        self.recorded.lock().unwrap().insert(prompt_key(prompt), out.clone());
        Ok(out)
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// OpenAI-compatible chat-completions client. The prompt is sent as a single
/// user message.
#[derive(Debug, Clone)]
pub struct HttpCompletionProvider {
    url: String,
    model: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl HttpCompletionProvider {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`. The key
    /// is read from the environment variable `api_key_env`.
    pub fn new(base_url: &str, model: &str, api_key_env: &str, timeout: Duration) -> Result<Self, CompletionError> {
        let api_key = std::env::var(api_key_env).map_err(|_| CompletionError::MissingApiKey(api_key_env.to_string()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        Ok(HttpCompletionProvider {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            http,
        })
    }
}

impl CompletionProvider for HttpCompletionProvider {
    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, CompletionError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        });
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                CompletionError::Timeout
            } else {
                CompletionError::Transport(e.to_string())
            }
        };
        let resp = self
            .http
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(transport)?;
        let status = resp.status();
        let text = resp.text().map_err(transport)?;
        if !status.is_success() {
            return Err(CompletionError::HttpStatus {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| CompletionError::Malformed(e.to_string()))?;
        if parsed.choices.len() != n {
            return Err(CompletionError::Malformed(format!("{} choices for n={n}", parsed.choices.len())));
        }
        Ok(parsed.choices.into_iter().map(|c| c.message.content.unwrap_or_default()).collect())
    }
}
