export {
  Action,
  ACTION_NAMES,
  EnvOptions,
  EpisodeInfo,
  NativeEnvError,
  Observation,
  ResetResult,
  RgbImage,
  SceneMeta,
  ScanwalkEnv,
  StepResult,
} from "./env";
