//! Serves a fixture graph as a minimal SPARQL 1.1 endpoint over an embedded
//! store, for running the compiler agreement check locally:
//!
//! ```text
//! cargo run -p kgqa-core --example serve_fixture -- fixtures/rockets 127.0.0.1:7878
//! KGQA_SPARQL_ENDPOINT=http://127.0.0.1:7878/sparql cargo test -p kgqa-core --test acceptance
//! ```
//!
//! Accepts `POST` with an `application/sparql-query` body and answers with
//! `application/sparql-results+json`. One connection at a time.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;

use oxigraph::io::RdfFormat;
use oxigraph::sparql::results::QueryResultsFormat;
use oxigraph::store::Store;

use kgqa_core::kg::load_kg;
use kgqa_core::sparql::export_ntriples;

fn respond(stream: &mut TcpStream, status: &str, content_type: &str, body: &[u8]) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)
}

fn handle(store: &Store, mut stream: TcpStream) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    if !request_line.starts_with("POST ") {
        return respond(&mut stream, "405 Method Not Allowed", "text/plain", b"POST only\n");
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let query = String::from_utf8_lossy(&body);
    let result = store
        .query(query.as_ref())
        .map_err(|e| e.to_string())
        .and_then(|r| r.write(Vec::new(), QueryResultsFormat::Json).map_err(|e| e.to_string()));
    match result {
        Ok(json) => respond(&mut stream, "200 OK", "application/sparql-results+json", &json),
        Err(e) => respond(&mut stream, "400 Bad Request", "text/plain", e.as_bytes()),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "fixtures/rockets".into());
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:7878".into());
    let dir = Path::new(&dir);
    let kg = load_kg(&dir.join("entities.tsv"), &dir.join("triples.tsv"), &dir.join("schema.tsv"))?;
    let store = Store::new()?;
    store.load_from_reader(RdfFormat::NTriples, export_ntriples(&kg).as_bytes())?;
    let listener = TcpListener::bind(&addr)?;
    eprintln!("serving {} on http://{addr}/sparql", dir.display());
    for stream in listener.incoming() {
        if let Err(e) = stream.and_then(|s| handle(&store, s)) {
            eprintln!("request failed: {e}");
        }
    }
    Ok(())
}
