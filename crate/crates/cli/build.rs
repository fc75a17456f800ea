use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
    println!("cargo:rerun-if-env-changed=LRMF_GIT_DESCRIBE");
    let describe = std::env::var("LRMF_GIT_DESCRIBE").ok().or_else(|| {
        Command::new("git")
            .args(["describe", "--always", "--dirty", "--tags"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
            .filter(|s| !s.is_empty())
    });
    let version = env!("CARGO_PKG_VERSION");
    let full = match describe {
        Some(d) => format!("{version} ({d})"),
        None => format!("{version} (unknown)"),
    };
    println!("cargo:rustc-env=LRMF_VERSION={full}");
}
