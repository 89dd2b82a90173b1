use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use tbert::corpus::RawDocument;
use tbert::embeddings::{fetch_embeddings, load_embeddings, write_tbem, EmbedClient};
use tbert::Error;

#[derive(Clone, Copy)]
enum Mode {
    Ok,
    DropLast,
    Fail,
    ShortVector,
    DimPerBatch,
}

fn vector_for(text: &str, dim: usize) -> Vec<f32> {
    let h = tbert::autoencoder::fnv1a(text.as_bytes());
    (0..dim).map(|j| ((h >> (8 * j)) & 0xff) as f32 / 255.0).collect()
}

struct Mock {
    endpoint: String,
    batches: Arc<Mutex<Vec<usize>>>,
}

fn read_request(reader: &mut BufReader<TcpStream>) -> Option<String> {
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().ok()?;
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let msg = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(msg.as_bytes());
}

fn serve(mode: Mode) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let batches = Arc::new(Mutex::new(Vec::new()));
    let seen = batches.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { return };
            let seen = seen.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                while let Some(body) = read_request(&mut reader) {
                    let req: serde_json::Value = serde_json::from_str(&body).unwrap();
                    let texts: Vec<String> = req["texts"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|t| t.as_str().unwrap().to_owned())
                        .collect();
                    let batch_no = {
                        let mut s = seen.lock().unwrap();
                        s.push(texts.len());
                        s.len()
                    };
                    let dim = match mode {
                        Mode::DimPerBatch => 3 + batch_no,
                        _ => 4,
                    };
                    let mut vectors: Vec<Vec<f32>> = texts.iter().map(|t| vector_for(t, dim)).collect();
                    match mode {
                        Mode::Fail => {
                            respond(&mut stream, "503 Service Unavailable", r#"{"error":"model not loaded"}"#);
                            continue;
                        }
                        Mode::DropLast => {
                            vectors.pop();
                        }
                        Mode::ShortVector => {
                            vectors[0].pop();
                        }
                        _ => {}
                    }
                    let body = serde_json::json!({ "dim": dim, "vectors": vectors }).to_string();
                    respond(&mut stream, "200 OK", &body);
                }
            });
        }
    });
    Mock { endpoint, batches }
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text number {i}")).collect()
}

#[test]
fn batching_does_not_change_results() {
    let mock = serve(Mode::Ok);
    let owned = texts(23);
    let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
    let client = EmbedClient::new(&mock.endpoint);
    let whole = client.embed(&refs, 100).unwrap();
    for batch in [1, 4, 7, 23] {
        assert_eq!(client.embed(&refs, batch).unwrap(), whole);
    }
    let mut expected = vec![23];
    expected.extend([1; 23]);
    expected.extend([4, 4, 4, 4, 4, 3, 7, 7, 7, 2, 23]);
    assert_eq!(*mock.batches.lock().unwrap(), expected);
}

#[test]
fn rows_follow_input_order() {
    let mock = serve(Mode::Ok);
    let owned = texts(10);
    let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
    let m = EmbedClient::new(&mock.endpoint).embed(&refs, 3).unwrap();
    for (i, t) in owned.iter().enumerate() {
        assert_eq!(m.row(i).to_vec(), vector_for(t, 4));
    }
}

#[test]
fn missing_vectors_are_a_count_mismatch() {
    let mock = serve(Mode::DropLast);
    let err = EmbedClient::new(&mock.endpoint).embed(&["a", "b", "c"], 8).unwrap_err();
    assert!(matches!(err, Error::CountMismatch { expected: 3, found: 2 }), "{err}");
}

#[test]
fn error_status_carries_server_message() {
    let mock = serve(Mode::Fail);
    match EmbedClient::new(&mock.endpoint).embed(&["a"], 8).unwrap_err() {
        Error::HttpStatus { status, message } => {
            assert_eq!(status, 503);
            assert_eq!(message, "model not loaded");
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn ragged_vectors_are_a_dim_mismatch() {
    let mock = serve(Mode::ShortVector);
    let err = EmbedClient::new(&mock.endpoint).embed(&["a", "b"], 8).unwrap_err();
    assert!(matches!(err, Error::DimMismatch { expected: 4, found: 3 }), "{err}");
}

#[test]
fn dim_change_between_batches_is_rejected() {
    let mock = serve(Mode::DimPerBatch);
    let err = EmbedClient::new(&mock.endpoint).embed(&["a", "b", "c"], 2).unwrap_err();
    assert!(matches!(err, Error::DimMismatch { expected: 4, found: 5 }), "{err}");
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = EmbedClient::new(&format!("http://127.0.0.1:{port}")).embed(&["a"], 1).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}

#[test]
fn fetched_embeddings_round_trip_through_tbem() {
    let mock = serve(Mode::Ok);
    let docs: Vec<RawDocument> = texts(5)
        .into_iter()
        .enumerate()
        .map(|(i, t)| RawDocument::new(format!("d{i}"), t))
        .collect();
    let m = fetch_embeddings(&format!("{}/", mock.endpoint), &docs, 2).unwrap();
    assert_eq!(m.ids(), ["d0", "d1", "d2", "d3", "d4"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.tbem");
    write_tbem(&path, &m).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), m);
}
