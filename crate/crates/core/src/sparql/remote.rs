use std::collections::BTreeSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use super::{entity_from_iri, AnswerKind, SparqlQuery, DATE_DATATYPE, XSD};
use crate::exec::AnswerSet;
use crate::kg::{AttributeValue, DataType};

#[derive(Debug, thiserror::Error)]
pub enum SparqlError {
    #[error("transport failure talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("request to {endpoint} timed out")]
    Timeout { endpoint: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed SPARQL results: {0}")]
    Malformed(String),
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking SPARQL-over-HTTP client. Cheap to clone; clones share the
/// connection limit.
#[derive(Debug, Clone)]
pub struct SparqlClient {
    endpoint: String,
    http: reqwest::blocking::Client,
    limiter: Arc<Limiter>,
}

impl SparqlClient {
    pub fn new(endpoint: &str, timeout: Duration, max_connections: usize) -> Result<Self, SparqlError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SparqlError::Transport {
                endpoint: endpoint.to_string(),
                message: e.to_string(),
            })?;
        Ok(SparqlClient {
            endpoint: endpoint.to_string(),
            http,
            limiter: Arc::new(Limiter {
                free: Mutex::new(max_connections.max(1)),
                cv: Condvar::new(),
            }),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn execute(&self, query: &SparqlQuery) -> Result<AnswerSet, SparqlError> {
        let _permit = self.limiter.acquire();
        let resp = self
            .http
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/sparql-query")
            .header(reqwest::header::ACCEPT, "application/sparql-results+json")
            .body(query.text.clone())
            .send()
            .map_err(|e| self.transport(e))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| self.transport(e))?;
        if !status.is_success() {
            return Err(SparqlError::HttpStatus {
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            });
        }
        parse_results(&body, query)
    }

    fn transport(&self, e: reqwest::Error) -> SparqlError {
        if e.is_timeout() {
            SparqlError::Timeout {
                endpoint: self.endpoint.clone(),
            }
        } else {
            SparqlError::Transport {
                endpoint: self.endpoint.clone(),
                message: e.to_string(),
            }
        }
    }
}

/// One-shot execution with a single connection.
pub fn execute_remote(query: &SparqlQuery, endpoint: &str, timeout: Duration) -> Result<AnswerSet, SparqlError> {
    SparqlClient::new(endpoint, timeout, 1)?.execute(query)
}

fn literal_from_json(term: &Value) -> Result<AttributeValue, SparqlError> {
    let lexical = term["value"]
        .as_str()
        .ok_or_else(|| SparqlError::Malformed("literal without value".into()))?;
    let datatype = term.get("datatype").and_then(Value::as_str).unwrap_or("");
    let tag = match datatype.strip_prefix(XSD) {
        Some("double" | "float" | "decimal") => DataType::Float,
        Some(
            "integer" | "int" | "long" | "short" | "byte" | "nonNegativeInteger" | "positiveInteger" | "negativeInteger"
            | "nonPositiveInteger",
        ) => DataType::Integer,
        Some("string") => DataType::String,
        Some(other) => return Err(SparqlError::Malformed(format!("unsupported datatype xsd:{other}"))),
        None if datatype == DATE_DATATYPE => DataType::Date,
        None if datatype.is_empty() => DataType::String,
        None => return Err(SparqlError::Malformed(format!("unsupported datatype <{datatype}>"))),
    };
    AttributeValue::parse_typed(lexical, tag).map_err(|e| SparqlError::Malformed(e.to_string()))
}

/// Parses `application/sparql-results+json` into the answer kind the query
/// was compiled for.
pub fn parse_results(body: &str, query: &SparqlQuery) -> Result<AnswerSet, SparqlError> {
    let json: Value = serde_json::from_str(body).map_err(|e| SparqlError::Malformed(e.to_string()))?;
    let bindings = json["results"]["bindings"]
        .as_array()
        .ok_or_else(|| SparqlError::Malformed("missing results.bindings".into()))?;
    let var = query.answer_variable.as_str();
    let terms = bindings.iter().filter_map(|b| b.get(var));
    match query.kind {
        AnswerKind::Count => {
            let term = terms
                .into_iter()
                .next()
                .ok_or_else(|| SparqlError::Malformed("count query returned no row".into()))?;
            match literal_from_json(term)? {
                AttributeValue::Integer(n) => Ok(AnswerSet::Number(n)),
                other => Err(SparqlError::Malformed(format!("count is not an integer: {other}"))),
            }
        }
        AnswerKind::Entities => {
            let mut out = BTreeSet::new();
            for t in terms {
                if t["type"] != "uri" {
                    return Err(SparqlError::Malformed(format!("expected an entity IRI, got {t}")));
                }
                let iri = t["value"].as_str().unwrap_or_default();
                out.insert(entity_from_iri(iri).ok_or_else(|| SparqlError::Malformed(format!("foreign IRI <{iri}>")))?);
            }
            Ok(AnswerSet::Entities(out))
        }
        AnswerKind::Literals => {
            let mut out = BTreeSet::new();
            for t in terms {
                if !matches!(t["type"].as_str(), Some("literal" | "typed-literal")) {
                    return Err(SparqlError::Malformed(format!("expected a literal, got {t}")));
                }
                out.insert(literal_from_json(t)?);
            }
            Ok(AnswerSet::Literals(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn query(kind: AnswerKind, var: &str) -> SparqlQuery {
        SparqlQuery {
            text: "SELECT DISTINCT ?v0 WHERE { }".into(),
            answer_variable: var.into(),
            kind,
        }
    }

    #[test]
    fn parses_entities_literals_and_counts() {
        let body = r#"{"head":{"vars":["v0"]},"results":{"bindings":[{"v0":{"type":"uri","value":"kg:entity/Delta"}}]}}"#;
        let got = parse_results(body, &query(AnswerKind::Entities, "v0")).unwrap();
        assert_eq!(got, AnswerSet::Entities(BTreeSet::from(["Delta".into()])));

        let body = r#"{"head":{"vars":["v0"]},"results":{"bindings":[
            {"v0":{"type":"literal","value":"1.0E3","datatype":"http://www.w3.org/2001/XMLSchema#double"}},
            {"v0":{"type":"literal","value":"2001-05","datatype":"kg:dt/date"}}]}}"#;
        let got = parse_results(body, &query(AnswerKind::Literals, "v0")).unwrap();
        assert_eq!(
            got,
            AnswerSet::Literals(BTreeSet::from([
                AttributeValue::Float(1000.0),
                AttributeValue::Date("2001-05".into())
            ]))
        );

        let body = r#"{"head":{"vars":["count"]},"results":{"bindings":[{"count":{"type":"literal","value":"1","datatype":"http://www.w3.org/2001/XMLSchema#integer"}}]}}"#;
        assert_eq!(
            parse_results(body, &query(AnswerKind::Count, "count")).unwrap(),
            AnswerSet::Number(1)
        );
    }

    #[test]
    fn malformed_bodies() {
        assert!(matches!(
            parse_results("nope", &query(AnswerKind::Entities, "v0")),
            Err(SparqlError::Malformed(_))
        ));
        assert!(matches!(
            parse_results("{}", &query(AnswerKind::Entities, "v0")),
            Err(SparqlError::Malformed(_))
        ));
    }

    /// Serves one canned HTTP response per connection.
    fn serve(responses: Vec<(u16, &'static str)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut s, _) = listener.accept().unwrap();
                let mut buf = [0u8; 4096];
                let _ = s.read(&mut buf);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                s.write_all(resp.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}/sparql")
    }

    #[test]
    fn http_status_and_success() {
        let url = serve(vec![(500, "boom"), (200, r#"{"head":{"vars":["v0"]},"results":{"bindings":[]}}"#)]);
        let client = SparqlClient::new(&url, Duration::from_secs(5), 2).unwrap();
        let q = query(AnswerKind::Entities, "v0");
        assert!(matches!(client.execute(&q), Err(SparqlError::HttpStatus { status: 500, .. })));
        assert_eq!(client.execute(&q).unwrap(), AnswerSet::empty());
    }

    #[test]
    fn unreachable_is_transport_not_empty() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = execute_remote(
            &query(AnswerKind::Entities, "v0"),
            &format!("http://{addr}/"),
            Duration::from_secs(2),
        )
        .unwrap_err();
        assert!(matches!(err, SparqlError::Transport { .. }), "{err}");
    }

    #[test]
    fn silent_server_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hold = std::thread::spawn(move || {
            let conn = listener.accept();
            std::thread::sleep(Duration::from_millis(800));
            drop(conn);
        });
        let err = execute_remote(
            &query(AnswerKind::Entities, "v0"),
            &format!("http://{addr}/"),
            Duration::from_millis(200),
        )
        .unwrap_err();
        assert!(matches!(err, SparqlError::Timeout { .. }), "{err}");
        hold.join().unwrap();
    }
}
