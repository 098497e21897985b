// synthetic data helpers live in benches/
