use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use vrpvp::cost::fetch_remote_table;
use vrpvp::{CostUnit, Error, Point};

/// Serves one HTTP request with `status` and `body`, returning the request line.
fn serve_once(status: &'static str, body: String) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut line = String::new();
        while reader.read_line(&mut line).unwrap() > 2 {
            line.clear();
        }
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        request_line
    });
    (url, handle)
}

fn points() -> Vec<Point> {
    vec![Point::new(12.49, 41.89), Point::new(12.48, 41.90), Point::new(12.47, 41.91)]
}

#[test]
fn converts_seconds_to_hours() {
    let body = r#"{"code":"Ok","durations":[[0,360,720],[360,0,1800],[720,1800,0]]}"#.to_string();
    let (url, handle) = serve_once("200 OK", body);
    let m = fetch_remote_table(&url, &points()).unwrap();
    let request = handle.join().unwrap();
    assert!(request.starts_with("GET /table/v1/driving/12.49,41.89;12.48,41.9;12.47,41.91"), "{request}");
    assert_eq!(m.unit(), CostUnit::Hours);
    assert_eq!(m.dimension(), 3);
    assert!((m.get(0, 1) - 0.1).abs() < 1e-12);
    assert!((m.get(1, 2) - 0.5).abs() < 1e-12);
}

#[test]
fn http_error_is_reported() {
    let (url, handle) = serve_once("503 Service Unavailable", "busy".into());
    match fetch_remote_table(&url, &points()) {
        Err(Error::Remote { status, body }) => {
            assert_eq!(status, 503);
            assert_eq!(body, "busy");
        }
        other => panic!("expected remote error, got {other:?}"),
    }
    handle.join().unwrap();
}

#[test]
fn service_code_and_missing_routes_are_errors() {
    let (url, handle) = serve_once("200 OK", r#"{"code":"InvalidQuery"}"#.into());
    assert!(matches!(fetch_remote_table(&url, &points()), Err(Error::Remote { .. })));
    handle.join().unwrap();

    let body = r#"{"code":"Ok","durations":[[0,1,null],[1,0,1],[1,1,0]]}"#.to_string();
    let (url, handle) = serve_once("200 OK", body);
    match fetch_remote_table(&url, &points()) {
        Err(Error::Remote { body, .. }) => assert!(body.contains("nodes 0 and 2")),
        other => panic!("expected unroutable pair, got {other:?}"),
    }
    handle.join().unwrap();

    let (url, handle) = serve_once("200 OK", r#"{"code":"Ok","durations":[[0]]}"#.into());
    assert!(matches!(fetch_remote_table(&url, &points()), Err(Error::Dimension(_))));
    handle.join().unwrap();
}

#[test]
fn unreachable_host_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    assert!(matches!(fetch_remote_table(&url, &points()), Err(Error::Transport(_))));
}
