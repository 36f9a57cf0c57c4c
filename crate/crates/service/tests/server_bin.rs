use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};

fn get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).unwrap();
    text
}

#[test]
fn server_binary_serves_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_fairlicit-server"))
        .args(["--port", "0", "--epsilon-default", "0.1"])
        .env("FAIRLICIT_STORE", dir.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .split("http://")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();

    let health = get(&addr, "/health");
    let fairness = get(&addr, "/datasets/odds_violated/fairness?criterion=equalized_odds&attribute=victim_age");
    let missing = get(&addr, "/datasets/nope");
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(fairness.contains("\"epsilon\":0.1"), "{fairness}");
    assert!(missing.starts_with("HTTP/1.1 404"), "{missing}");
    assert!(dir.path().join("datasets/fixture.json").is_file());
}
