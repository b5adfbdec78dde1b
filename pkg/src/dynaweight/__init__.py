from dynaweight.pipeline import run_sequence
