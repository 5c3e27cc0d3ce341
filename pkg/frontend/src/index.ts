export { ApiClient, type FetchLike } from "./api.js";
export { pollUntilDone, type Sleep } from "./poll.js";
export { renderRoute, mount } from "./app.js";
export { renderTaxonomyTree, renderNodePanel, nameIndex } from "./taxonomyView.js";
export { renderTrendChart, renderTrendPanel } from "./trendChart.js";
export { renderMatrix, renderGapPanel } from "./matrixView.js";
export { renderTraceDag, renderNodeDetails } from "./traceView.js";
export { renderMilestones } from "./milestoneView.js";
export {
  runSessionTurn,
  renderResultPanel,
  renderFailurePanel,
  renderSessionHistory,
} from "./sessionView.js";
export * from "./types.js";
