//! Drives the command front end in-process with a generated configuration
//! and prints the files of the resulting report bundle.

fn main() {
    let dir = std::env::temp_dir().join(format!("riskwild-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "seed = 42\n[dims]\nn = 50\n[loss]\nname = \"expfam\"\nlog_partition = \"softplus-sum\"\nmu = 1.0\n\
         [trainer]\nname = \"convex-erm\"\n",
    )
    .expect("config");
    let code = riskwild::cli::run_from([
        "riskwild",
        "audit",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("bundle").to_str().unwrap(),
    ]);
    println!("exit code {code}");
}
