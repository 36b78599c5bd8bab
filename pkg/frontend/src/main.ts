import { ServiceClient } from "./api.js";
import { ConsoleSession } from "./model.js";
import { ConsoleUI } from "./ui.js";

// service URL: ?service=http://host:port, else same origin
const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? window.location.origin;

const client = new ServiceClient(base);
const session = new ConsoleSession(client);
const ui = new ConsoleUI(document.getElementById("app")!, session);
ui.mount();

client.health().catch(() => {
  ui.showError(`policy service unreachable at ${base} — pass ?service=http://host:port`);
});
