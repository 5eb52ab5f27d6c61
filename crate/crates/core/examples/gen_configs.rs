//! Regenerate the desk-protocol configs shipped under `configs/`.
//!
//! Run from the workspace root: `cargo run -p clref-core --example gen_configs`

use clref_core::harness::RunConfig;
use clref_core::methods::Method;

fn main() {
    let dir = std::path::Path::new("configs");
    std::fs::create_dir_all(dir).unwrap();
    for (name, method) in [
        ("desk_finetune", Method::Finetune),
        ("desk_er", Method::Er),
        ("desk_derpp", Method::Derpp),
        ("desk_oewc", Method::Oewc),
        ("desk_cpr", Method::Cpr),
        ("desk_joint", Method::Joint),
    ] {
        let config = RunConfig::desk_protocol(method, false);
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        println!("wrote {}", path.display());

        if method != Method::Finetune && method != Method::Joint {
            let refreshed = RunConfig::desk_protocol(method, true);
            let path = dir.join(format!("{name}_refresh.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&refreshed).unwrap()).unwrap();
            println!("wrote {}", path.display());
        }
    }
}
