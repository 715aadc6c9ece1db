use clap::Parser;

fn main() {
    let cfg = rbm_cli::RunConfig::parse();
    match rbm_cli::run(&cfg) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("rbm: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
