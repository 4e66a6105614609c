from .chain import ChainMdpConfig, ChainProblem, build_chain
from .tetris import TetrisConfig, TetrisEnv, TetrisModel, build_tetris, tetris_features
