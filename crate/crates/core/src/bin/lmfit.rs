fn main() {
    std::process::exit(latent_markov::cli::run(std::env::args_os()));
}
