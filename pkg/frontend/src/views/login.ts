export function renderLogin(error: string | null): string {
  const box = error ? `<div class="error-box">${error}</div>` : "";
  return `
<section class="login">
  <h2>Sign in</h2>
  ${box}
  <form id="login-form">
    <label>User <input id="login-user" autocomplete="username"></label>
    <label>Password <input id="login-password" type="password"
           autocomplete="current-password"></label>
    <button type="submit">Sign in</button>
  </form>
</section>`;
}
