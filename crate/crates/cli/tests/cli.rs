use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;
use predicates::prelude::*;
use tempfile::TempDir;

fn fq() -> Command {
    Command::cargo_bin("flashquad").unwrap()
}

struct Dir {
    tmp: TempDir,
}

impl Dir {
    fn new() -> Self {
        Self { tmp: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn run(&self, args: &[&str]) -> assert_cmd::assert::Assert {
        fq().current_dir(self.tmp.path()).args(args).assert()
    }

    fn stdout(&self, args: &[&str]) -> String {
        let out = self.run(args).success().get_output().stdout.clone();
        String::from_utf8(out).unwrap()
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }
}

const DATASET: &str = "\
# two gantries and a square zone
G 1 1000000 1000000
G 2 1000200 1000000
Z 10 990000 990000 1010000 990000 1010000 1010000 990000 1010000
";

fn built(d: &Dir) {
    d.write("ds.txt", DATASET);
    d.run(&["build", "--sectors", "16", "ds.txt", "dev.img"]).success();
}

#[test]
fn format_then_stats_shows_an_empty_tree() {
    let d = Dir::new();
    d.run(&["format", "--sectors", "16", "dev.img"]).success();
    let out = d.stdout(&["stats", "--format", "csv", "dev.img"]);
    assert!(out.contains("a,Objects,0\n"), "{out}");
    assert!(out.contains("b,Total pages,1\n"), "{out}");
    let out = d.stdout(&["query-gantries", "--at", "1000000,1000000", "--radius", "500", "dev.img"]);
    assert_eq!(out, "");
}

#[test]
fn format_refuses_to_overwrite() {
    let d = Dir::new();
    d.run(&["format", "--sectors", "16", "dev.img"]).success();
    d.run(&["format", "--sectors", "16", "dev.img"]).code(1).stderr(predicate::str::contains("--force"));
    d.run(&["format", "--sectors", "16", "--force", "dev.img"]).success();
}

#[test]
fn queries_in_every_format() {
    let d = Dir::new();
    built(&d);
    let text = d.stdout(&["query-gantries", "--at", "1000100,1000000", "--radius", "150", "dev.img"]);
    assert_eq!(text, "gantry 1 distance 1000000,1000000\ngantry 2 distance 1000200,1000000\n");
    let csv = d.stdout(&["query-zones", "--at", "1000000,1000000", "--format", "csv", "dev.img"]);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("10,zone,"), "{csv}");
    let json = d.stdout(&["query-zones", "--at", "5,5", "--format", "json", "dev.img"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["hits"].as_array().unwrap().len(), 0);
    assert!(v["cost"]["pages_read"].as_u64().unwrap() >= 1);
}

#[test]
fn pending_head_lives_across_invocations() {
    let d = Dir::new();
    built(&d);
    d.run(&["insert", "--gantry", "3", "--at", "1000400,1000000", "dev.img"]).success();
    assert!(d.path("dev.img.pending").exists());
    let v = d.stdout(&["versions", "--format", "csv", "dev.img"]);
    let last = v.lines().last().unwrap();
    assert!(last.starts_with("3,") && last.ends_with(",pending"), "{v}");
    // The uncommitted head is what queries see by default.
    let out = d.stdout(&["query-gantries", "--at", "1000400,1000000", "--radius", "0", "dev.img"]);
    assert!(out.contains("gantry 3"), "{out}");
    let out = d.stdout(&["query-gantries", "--at", "1000400,1000000", "--radius", "0", "--version", "2", "dev.img"]);
    assert_eq!(out, "");
    d.run(&["rm", "--id", "1", "dev.img"]).success();
    d.run(&["rollback", "dev.img"]).success();
    assert!(!d.path("dev.img.pending").exists());
    let out = d.stdout(&["query-gantries", "--at", "1000400,1000000", "--radius", "0", "dev.img"]);
    assert_eq!(out, "");
    d.run(&["rm", "--id", "1,2", "dev.img"]).success();
    d.run(&["commit", "dev.img"]).success();
    let v = d.stdout(&["versions", "dev.img"]);
    assert!(v.lines().last().unwrap().contains("current"), "{v}");
    let s = d.stdout(&["stats", "--format", "csv", "dev.img"]);
    assert!(s.contains("a,Objects,1\n"), "{s}");
    d.run(&["commit", "dev.img"]).code(1).stderr(predicate::str::contains("nothing to commit"));
}

#[test]
fn diff_and_apply_reproduce_the_version() {
    let d = Dir::new();
    built(&d);
    fs::copy(d.path("dev.img"), d.path("clone.img")).unwrap();
    d.run(&["insert", "--zone", "11", "--polygon", "1000000,0;1100000,0;1050000,90000", "dev.img"]).success();
    d.run(&["rm", "--id", "2", "--commit", "dev.img"]).success();
    d.run(&["diff", "dev.img", "--base", "2", "--next", "3", "-o", "pkg.bin"]).success();
    d.run(&["apply", "pkg.bin", "clone.img"]).success();
    d.run(&["verify", "clone.img"]).success().stdout(predicate::str::contains("0 problem(s)"));
    for args in [
        ["query-zones", "--at", "1050000,10000"],
        ["query-gantries", "--at", "1000000,1000000"],
    ] {
        let a = d.stdout(&[args[0], args[1], args[2], "dev.img"]);
        let b = d.stdout(&[args[0], args[1], args[2], "clone.img"]);
        assert_eq!(a, b);
    }
    // A second apply finds the device past the package's base.
    d.run(&["apply", "pkg.bin", "clone.img"]).code(1).stderr(predicate::str::contains("version conflict"));
}

#[test]
fn exit_codes_and_untouched_image_on_error() {
    let d = Dir::new();
    built(&d);
    let before = fs::read(d.path("dev.img")).unwrap();
    d.run(&["frobnicate"]).code(2);
    d.run(&["query-zones", "dev.img"]).code(2);
    d.run(&["query-zones", "--at", "12", "dev.img"]).code(2);
    d.run(&["format", "--max-depth", "9", "x.img"]).code(2);
    d.run(&["rm", "--id", "77", "dev.img"]).code(1).stderr(predicate::str::contains("77 not found"));
    d.run(&["insert", "--gantry", "1", "--at", "5,5", "dev.img"]).code(1).stderr(predicate::str::contains("already exists"));
    d.run(&["insert", "--gantry", "9", "--at", "-1,5", "dev.img"]).code(1).stderr(predicate::str::contains("outside the world"));
    d.run(&["stats", "missing.img"]).code(1);
    assert_eq!(fs::read(d.path("dev.img")).unwrap(), before);
    assert!(!d.path("dev.img.pending").exists());
    assert!(!d.path("dev.img.lock").exists());
}

#[test]
fn lock_blocks_writers_but_not_readers() {
    let d = Dir::new();
    built(&d);
    d.write("dev.img.lock", "");
    d.run(&["gc", "dev.img"]).code(1).stderr(predicate::str::contains("locked"));
    d.run(&["stats", "dev.img"]).success();
    fs::remove_file(d.path("dev.img.lock")).unwrap();
    d.run(&["gc", "dev.img"]).success();
}

#[test]
fn build_reports_the_bad_line() {
    let d = Dir::new();
    d.write("bad.txt", "G 1 10 10\nG 2 10\n");
    d.run(&["build", "bad.txt", "dev.img"]).code(1).stderr(predicate::str::contains("line 2"));
    d.write("far.txt", "# c\nG 1 10 10\nG 2 3000000 10\n");
    d.run(&["build", "far.txt", "dev.img"]).code(1).stderr(predicate::str::contains("line 3"));
}

fn flip_bit(image: &Path, page: u32, offset: usize) {
    let mut bytes = fs::read(image).unwrap();
    // Image header: 4-byte magic and the sector count.
    let at = 8 + page as usize * 256 + offset;
    bytes[at] &= !0x01;
    fs::write(image, bytes).unwrap();
}

#[test]
fn verify_fails_on_a_damaged_page() {
    let d = Dir::new();
    built(&d);
    d.run(&["verify", "dev.img"]).success();
    let v = d.stdout(&["versions", "--format", "csv", "dev.img"]);
    let root: u32 = v.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    // An entry byte that is 0xFF in any mostly empty node.
    flip_bit(&d.path("dev.img"), root, 255);
    d.run(&["verify", "dev.img"]).code(1).stderr(predicate::str::contains("crc mismatch"));
}

#[test]
fn generator_and_replay_are_deterministic() {
    let d = Dir::new();
    let args = ["gen-dataset", "--seed", "5", "--gantries", "300", "--zones", "10", "--towns", "2", "--roads", "10"];
    let a = d.stdout(&[&args[..], &["--trace", "t.txt", "-o", "ds.txt"]].concat());
    assert_eq!(a, "");
    let b = d.stdout(&args);
    assert_eq!(fs::read_to_string(d.path("ds.txt")).unwrap(), b);
    d.run(&["build", "--sectors", "32", "ds.txt", "dev.img"]).success();
    let r1 = d.stdout(&["replay", "--trace", "t.txt", "dev.img"]);
    d.run(&["replay", "--trace", "t.txt", "-o", "r.csv", "dev.img"]).success();
    assert_eq!(fs::read_to_string(d.path("r.csv")).unwrap(), r1);
    assert!(r1.starts_with("t,pages_read,cache_hits,n_gantries,gantry_ids,zone_ids\n"));
    let steps = fs::read_to_string(d.path("t.txt")).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(r1.lines().count(), steps + 1);
}
