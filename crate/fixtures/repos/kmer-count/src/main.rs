fn main() {
    println!("kmer-count 0.2.0");
}
