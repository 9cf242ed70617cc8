//! Newline-delimited JSON protocol spoken with model providers.
//!
//! ```text
//! → {"op":"info"}                          ← {"name":str,"dim":int,"normalizes":bool}
//! → {"op":"embed","texts":[str,...]}       ← {"vectors":[[float,...],...]}
//! → {"op":"score","pairs":[[str,str],...]} ← {"scores":[float,...]}
//! errors                                   ← {"error":str}
//! ```
//!
//! One object per line, responses in request order. A connection is a
//! serial channel; every call takes `&mut self`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{DenseError, EmbeddingProvider, ProviderInfo, Scorer};

/// Environment variable that may hold a provider address.
pub const PROVIDER_ADDR_ENV: &str = "DR_PROVIDER_ADDR";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Info,
    Embed { texts: Vec<String> },
    Score { pairs: Vec<(String, String)> },
}

pub struct WireClient {
    reader: Box<dyn BufRead + Send>,
    writer: Option<Box<dyn Write + Send>>,
    child: Option<Child>,
    addr: String,
}

impl WireClient {
    /// Connects to `tcp:HOST:PORT` or spawns `stdio:COMMAND [ARGS...]`.
    pub fn connect(addr: &str) -> Result<Self, DenseError> {
        let unavailable = |e: io::Error| DenseError::ProviderUnavailable(format!("{addr}: {e}"));
        if let Some(target) = addr.strip_prefix("tcp:") {
            let stream = TcpStream::connect(target).map_err(unavailable)?;
            let reader = BufReader::new(stream.try_clone().map_err(unavailable)?);
            Ok(WireClient {
                reader: Box::new(reader),
                writer: Some(Box::new(stream)),
                child: None,
                addr: addr.to_string(),
            })
        } else if let Some(cmdline) = addr.strip_prefix("stdio:") {
            let mut parts = cmdline.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| DenseError::ProviderUnavailable("empty stdio command".into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .spawn()
                .map_err(unavailable)?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok(WireClient {
                reader: Box::new(BufReader::new(stdout)),
                writer: Some(Box::new(stdin)),
                child: Some(child),
                addr: addr.to_string(),
            })
        } else {
            Err(DenseError::ProviderUnavailable(format!(
                "unrecognized provider address {addr:?} (expected tcp:HOST:PORT or stdio:COMMAND)"
            )))
        }
    }

    pub fn from_streams(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        WireClient {
            reader: Box::new(reader),
            writer: Some(Box::new(writer)),
            child: None,
            addr: "<stream>".into(),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    fn call(&mut self, request: &Request) -> Result<Value, DenseError> {
        let lost = |e: io::Error| DenseError::ProviderUnavailable(e.to_string());
        let writer = self
            .writer
            .as_mut()
            .ok_or_else(|| DenseError::ProviderUnavailable("connection closed".into()))?;
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        writer.write_all(line.as_bytes()).map_err(lost)?;
        writer.flush().map_err(lost)?;

        let mut response = String::new();
        if self.reader.read_line(&mut response).map_err(lost)? == 0 {
            return Err(DenseError::ProviderUnavailable(format!(
                "{}: connection closed",
                self.addr
            )));
        }
        let value: Value = serde_json::from_str(&response)
            .map_err(|e| DenseError::Protocol(format!("malformed response: {e}")))?;
        if let Some(msg) = value.get("error") {
            let msg = msg.as_str().map(str::to_owned).unwrap_or_else(|| msg.to_string());
            return Err(DenseError::Remote(msg));
        }
        Ok(value)
    }

    fn field<T: serde::de::DeserializeOwned>(value: Value, name: &str) -> Result<T, DenseError> {
        let field = value
            .get(name)
            .cloned()
            .ok_or_else(|| DenseError::Protocol(format!("response lacks {name:?}")))?;
        serde_json::from_value(field).map_err(|e| DenseError::Protocol(format!("{name}: {e}")))
    }

    pub fn info(&mut self) -> Result<ProviderInfo, DenseError> {
        let value = self.call(&Request::Info)?;
        let info: ProviderInfo = serde_json::from_value(value)
            .map_err(|e| DenseError::Protocol(format!("info: {e}")))?;
        if info.dim == 0 {
            return Err(DenseError::Protocol("provider reported dim 0".into()));
        }
        Ok(info)
    }

    pub fn embed_raw(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError> {
        let value = self.call(&Request::Embed {
            texts: texts.to_vec(),
        })?;
        Self::field(value, "vectors")
    }

    /// Performs the `info` handshake and wraps the connection as an
    /// embedding provider.
    pub fn into_embedder(mut self) -> Result<WireEmbedder, DenseError> {
        let info = self.info()?;
        Ok(WireEmbedder { client: self, info })
    }
}

impl Scorer for WireClient {
    fn score(&mut self, pairs: &[(String, String)]) -> Result<Vec<f64>, DenseError> {
        let value = self.call(&Request::Score {
            pairs: pairs.to_vec(),
        })?;
        let scores: Vec<f64> = Self::field(value, "scores")?;
        if scores.len() != pairs.len() {
            return Err(DenseError::CountMismatch {
                expected: pairs.len(),
                got: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(DenseError::Protocol("non-finite score".into()));
        }
        Ok(scores)
    }
}

impl Drop for WireClient {
    fn drop(&mut self) {
        // Closing stdin tells a stdio provider to exit.
        self.writer.take();
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
    }
}

pub struct WireEmbedder {
    client: WireClient,
    info: ProviderInfo,
}

impl WireEmbedder {
    pub fn client_mut(&mut self) -> &mut WireClient {
        &mut self.client
    }
}

impl EmbeddingProvider for WireEmbedder {
    fn info(&self) -> &ProviderInfo {
        &self.info
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, DenseError> {
        self.client.embed_raw(texts)
    }
}

fn error_line(msg: impl Into<String>) -> Value {
    json!({ "error": msg.into() })
}

/// Answers protocol requests from `reader` until end of input. Either role
/// may be absent; requests for a missing role get an error line.
pub fn serve<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    mut embedder: Option<&mut dyn EmbeddingProvider>,
    mut scorer: Option<&mut dyn Scorer>,
) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => error_line(format!("bad request: {e}")),
            Ok(Request::Info) => match embedder.as_deref() {
                Some(e) => serde_json::to_value(e.info()).expect("info serializes"),
                None => error_line("info is only available on embedders"),
            },
            Ok(Request::Embed { texts }) => match embedder.as_deref_mut() {
                Some(e) => match e.embed_batch(&texts) {
                    Ok(vectors) => json!({ "vectors": vectors }),
                    Err(err) => error_line(err.to_string()),
                },
                None => error_line("embed is not supported by this model"),
            },
            Ok(Request::Score { pairs }) => match scorer.as_deref_mut() {
                Some(s) => match s.score(&pairs) {
                    Ok(scores) => json!({ "scores": scores }),
                    Err(err) => error_line(err.to_string()),
                },
                None => error_line("score is not supported by this model"),
            },
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
